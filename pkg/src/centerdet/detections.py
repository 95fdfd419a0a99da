"""Detection records and their JSONL interchange format.

One detection per line:

    {"image_id": str, "class_id": int, "score": float, "center": [x, y]}

or with ``"hbox": [x1, y1, x2, y2]`` in place of ``center`` for the box
baselines (both may be present; the center wins for evaluation).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .geometry import HorizontalBox, Point2D, box_center


@dataclass(frozen=True)
class Detection:
    class_id: int
    score: float
    center: Optional[Point2D] = None
    hbox: Optional[HorizontalBox] = None

    def __post_init__(self):
        if self.center is None and self.hbox is None:
            raise ValueError("detection needs a center or a box")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")

    @property
    def point(self) -> Point2D:
        """The detection reduced to a centerpoint."""
        if self.center is not None:
            return self.center
        return box_center(self.hbox)


def save_detections(per_image: dict[str, list[Detection]], path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for image_id in sorted(per_image):
            for det in per_image[image_id]:
                rec: dict = {
                    "image_id": image_id,
                    "class_id": det.class_id,
                    "score": det.score,
                }
                if det.center is not None:
                    rec["center"] = [det.center.x, det.center.y]
                if det.hbox is not None:
                    rec["hbox"] = list(det.hbox.as_tuple())
                fh.write(json.dumps(rec) + "\n")


def load_detections(path: str | Path) -> dict[str, list[Detection]]:
    out: dict[str, list[Detection]] = {}
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                center = rec.get("center")
                hbox = rec.get("hbox")
                det = Detection(
                    class_id=int(rec["class_id"]),
                    score=float(rec["score"]),
                    center=None if center is None else Point2D(*map(float, center)),
                    hbox=None if hbox is None else HorizontalBox(*map(float, hbox)),
                )
            except (KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}:{lineno}: malformed detection: {e}") from e
            out.setdefault(str(rec["image_id"]), []).append(det)
    return out
