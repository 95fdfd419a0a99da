"""Scene annotations and their JSONL on-disk format.

One scene per line:

    {"image_id": str, "image_path": str|null, "width": int, "height": int,
     "gsd": float|null,
     "objects": [{"class_id": int, "center": [x, y]}
                 | {"class_id": int, "hbox": [x1, y1, x2, y2]}
                 | {"class_id": int, "rbox": [cx, cy, w, h, angle_rad]}]}

Box records are converted to centerpoints on load; the source box is kept on
the object for size binning and the box baselines. Images are PNG, referenced
by ``image_path`` relative to the annotation file unless absolute.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from ..geometry import (
    GroundTruthObject,
    HorizontalBox,
    Point2D,
    RotatedBox,
    box_center,
)


class AnnotationError(ValueError):
    """Malformed or inconsistent annotation input."""


@dataclass
class Scene:
    """An image reference plus its ground-truth objects.

    ``pixels`` holds the image in memory (H, W, 3) float32 in [0, 1] when the
    scene was generated rather than loaded; otherwise it is lazily read from
    ``image_path``.
    """

    image_id: str
    width: int
    height: int
    gsd: Optional[float] = None
    objects: list[GroundTruthObject] = field(default_factory=list)
    image_path: Optional[str] = None
    pixels: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise AnnotationError(f"bad image size {self.width}x{self.height}")
        if self.gsd is not None and self.gsd <= 0:
            raise AnnotationError(f"gsd must be positive, got {self.gsd}")
        for obj in self.objects:
            if not (0 <= obj.center.x <= self.width and 0 <= obj.center.y <= self.height):
                raise AnnotationError(
                    f"object center ({obj.center.x}, {obj.center.y}) outside "
                    f"{self.width}x{self.height} image '{self.image_id}'"
                )

    @property
    def num_pixels(self) -> int:
        return self.width * self.height

    @property
    def clutter_ratio(self) -> float:
        return len(self.objects) / self.num_pixels


def _object_from_record(rec: dict) -> GroundTruthObject:
    class_id = int(rec["class_id"])
    keys = [k for k in ("center", "hbox", "rbox") if k in rec]
    if len(keys) != 1:
        raise AnnotationError(f"object must have exactly one of center/hbox/rbox, got {rec}")
    kind = keys[0]
    if kind == "center":
        x, y = rec["center"]
        return GroundTruthObject(Point2D(float(x), float(y)), class_id)
    if kind == "hbox":
        box = HorizontalBox(*(float(v) for v in rec["hbox"]))
    else:
        cx, cy, w, h, angle = (float(v) for v in rec["rbox"])
        box = RotatedBox(Point2D(cx, cy), w, h, angle)
    return GroundTruthObject(box_center(box), class_id, source_box=box)


def _object_to_record(obj: GroundTruthObject) -> dict:
    rec: dict = {"class_id": obj.class_id}
    box = obj.source_box
    if box is None:
        rec["center"] = [obj.center.x, obj.center.y]
    elif isinstance(box, RotatedBox):
        rec["rbox"] = [box.center.x, box.center.y, box.width, box.height, box.angle]
    else:
        rec["hbox"] = [box.x_min, box.y_min, box.x_max, box.y_max]
    return rec


def load_annotations(path: str | Path, keep_source_boxes: bool = True) -> list[Scene]:
    """Parse a JSONL annotation file into scenes.

    Raises :class:`AnnotationError` naming the offending line for malformed
    records or out-of-bounds centers.
    """
    path = Path(path)
    scenes = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                objects = [_object_from_record(o) for o in rec.get("objects", [])]
                if not keep_source_boxes:
                    objects = [
                        GroundTruthObject(o.center, o.class_id) for o in objects
                    ]
                image_path = rec.get("image_path")
                if image_path is not None and not Path(image_path).is_absolute():
                    image_path = str(path.parent / image_path)
                scene = Scene(
                    image_id=str(rec["image_id"]),
                    width=int(rec["width"]),
                    height=int(rec["height"]),
                    gsd=None if rec.get("gsd") is None else float(rec["gsd"]),
                    objects=objects,
                    image_path=image_path,
                )
            except AnnotationError as e:
                raise AnnotationError(f"{path}:{lineno}: {e}") from e
            except (KeyError, TypeError, ValueError) as e:
                raise AnnotationError(f"{path}:{lineno}: malformed record: {e}") from e
            scenes.append(scene)
    return scenes


def save_annotations(scenes: list[Scene], path: str | Path) -> None:
    """Write scenes as JSONL; ``image_path`` is stored relative when possible."""
    path = Path(path)
    with path.open("w") as fh:
        for scene in scenes:
            image_path = scene.image_path
            if image_path is not None:
                try:
                    image_path = str(Path(image_path).relative_to(path.parent))
                except ValueError:
                    pass
            rec = {
                "image_id": scene.image_id,
                "image_path": image_path,
                "width": scene.width,
                "height": scene.height,
                "gsd": scene.gsd,
                "objects": [_object_to_record(o) for o in scene.objects],
            }
            fh.write(json.dumps(rec) + "\n")


def scene_pixels(scene: Scene) -> np.ndarray:
    """The scene image as (H, W, 3) float32 in [0, 1].

    Prefers in-memory pixels; otherwise reads the PNG at ``image_path``.
    """
    if scene.pixels is not None:
        return scene.pixels
    if scene.image_path is None:
        raise AnnotationError(f"scene '{scene.image_id}' has neither pixels nor image_path")
    with Image.open(scene.image_path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    if arr.shape[:2] != (scene.height, scene.width):
        raise AnnotationError(
            f"scene '{scene.image_id}': annotation says {scene.width}x{scene.height} "
            f"but image is {arr.shape[1]}x{arr.shape[0]}"
        )
    return arr


def save_scene_png(scene: Scene, path: str | Path) -> None:
    """Quantize in-memory pixels to 8-bit and write a PNG."""
    if scene.pixels is None:
        raise AnnotationError(f"scene '{scene.image_id}' has no in-memory pixels")
    arr = np.clip(np.rint(scene.pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)
