"""Common centerpoint evaluation for detectors of any annotation style.

Every detection is reduced to a centerpoint and matched greedily (descending
score) to the nearest unmatched same-class ground truth within a distance
cutoff: 3 meters when the image GSD is known, 10 pixels otherwise. Average
precision integrates the precision-recall curve under the right-max precision
envelope (continuous area, not 11-point); mAP is the unweighted mean over
evaluated classes. Size bins reuse the usual 32^2 / 96^2 area thresholds.
The interpolation convention and the size-bin thresholds are choices of this
implementation and are recorded in every report's ``conventions`` block.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .detections import Detection
from .geometry import GroundTruthObject, Point2D, box_area, center_distance

METERS_CUTOFF = 3.0
PIXELS_CUTOFF = 10.0
SMALL_AREA_MAX = 32.0**2
MEDIUM_AREA_MAX = 96.0**2

CONVENTIONS = {
    "ap_interpolation": "continuous area under right-max precision envelope",
    "size_bin_area_thresholds": [SMALL_AREA_MAX, MEDIUM_AREA_MAX],
    "distance_cutoff_meters": METERS_CUTOFF,
    "distance_cutoff_pixels": PIXELS_CUTOFF,
}


def to_centerpoint(det: Detection) -> Point2D:
    """Centerpoint of a detection; boxes reduce to their center."""
    return det.point


@dataclass
class MatchResult:
    """Per-detection outcome of greedy matching within one image.

    Arrays follow the input detection order. ``matched_gt`` is -1 for false
    positives; matched ground truths are unique.
    """

    tp: np.ndarray
    matched_gt: np.ndarray
    n_unmatched_gt: int


def match_detections(
    detections: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    gsd: Optional[float] = None,
    meters_cutoff: float = METERS_CUTOFF,
    pixels_cutoff: float = PIXELS_CUTOFF,
) -> MatchResult:
    """Greedy same-class matching by center distance within one image.

    Detections are visited in descending score (ties by input index); each
    takes the nearest unmatched ground truth of its class within the cutoff.
    Distances and the cutoff are in meters when ``gsd`` is given.
    """
    if gsd is not None and gsd <= 0:
        raise ValueError(f"gsd must be positive, got {gsd}")
    threshold = meters_cutoff if gsd is not None else pixels_cutoff
    n = len(detections)
    tp = np.zeros(n, dtype=bool)
    matched = np.full(n, -1, dtype=np.int64)
    order = sorted(range(n), key=lambda i: (-detections[i].score, i))
    taken = np.zeros(len(gts), dtype=bool)
    for i in order:
        det = detections[i]
        point = det.point
        best_g = -1
        best_d = np.inf
        for g, gt in enumerate(gts):
            if taken[g] or gt.class_id != det.class_id:
                continue
            d = center_distance(point, gt.center, gsd)
            if d <= threshold and d < best_d:
                best_g, best_d = g, d
        if best_g >= 0:
            taken[best_g] = True
            tp[i] = True
            matched[i] = best_g
    return MatchResult(tp=tp, matched_gt=matched, n_unmatched_gt=int((~taken).sum()))


def average_precision(tp_flags: Sequence[bool], n_gt: int) -> Optional[float]:
    """AP from true-positive flags in descending-score order.

    Returns 0.0 when there are detections but no ground truth, and None (class
    skipped) when there is neither.
    """
    if n_gt < 0:
        raise ValueError("n_gt must be >= 0")
    flags = np.asarray(tp_flags, dtype=bool)
    if n_gt == 0:
        return 0.0 if flags.size else None
    if flags.size == 0:
        return 0.0
    tp_cum = np.cumsum(flags)
    precision = tp_cum / np.arange(1, flags.size + 1)
    recall = tp_cum / n_gt
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * envelope))


def mean_ap(per_class: dict[int, Optional[float]]) -> float:
    """Unweighted mean over evaluated (non-skipped) classes."""
    values = [v for v in per_class.values() if v is not None]
    if not values:
        raise ValueError("no evaluated classes")
    return float(np.mean(values))


@dataclass
class ImageEval:
    """One test image: detections, ground truth, optional GSD and pixel count.

    ``image_area`` (width * height) is only needed for clutter binning.
    """

    image_id: str
    detections: list[Detection]
    gts: list[GroundTruthObject]
    gsd: Optional[float] = None
    image_area: Optional[float] = None


@dataclass
class PRCurve:
    recall: np.ndarray
    precision: np.ndarray


@dataclass
class ClutterBin:
    label: str
    image_ids: list[str]
    mean_ap: Optional[float]


@dataclass
class EvaluationReport:
    per_class_ap: dict[int, Optional[float]]
    mean_ap: Optional[float]
    map_small: Optional[float] = None
    map_medium: Optional[float] = None
    map_large: Optional[float] = None
    clutter_bins: Optional[list[ClutterBin]] = None
    pr_curves: dict[int, PRCurve] = field(default_factory=dict)
    n_images: int = 0
    conventions: dict = field(default_factory=lambda: dict(CONVENTIONS))

    def to_dict(self) -> dict:
        return {
            "per_class_ap": {str(k): v for k, v in sorted(self.per_class_ap.items())},
            "mean_ap": self.mean_ap,
            "map_small": self.map_small,
            "map_medium": self.map_medium,
            "map_large": self.map_large,
            "clutter_bins": None
            if self.clutter_bins is None
            else [
                {"label": b.label, "n_images": len(b.image_ids), "mean_ap": b.mean_ap}
                for b in self.clutter_bins
            ],
            "n_images": self.n_images,
            "conventions": self.conventions,
        }


def _collect_class_flags(
    images: Sequence[ImageEval],
    matches: Sequence[MatchResult],
    bin_range: Optional[tuple[float, float]] = None,
) -> tuple[dict[int, list], dict[int, int]]:
    """Scored TP/FP entries and ground-truth counts per class.

    With ``bin_range`` set, ground truths are restricted to source-box areas in
    [lo, hi); detections matched to out-of-bin ground truths are dropped
    rather than counted as false positives.
    """
    entries: dict[int, list] = {}
    n_gt: dict[int, int] = {}

    def in_bin(gt: GroundTruthObject) -> bool:
        if bin_range is None:
            return True
        lo, hi = bin_range
        return gt.source_box is not None and lo <= box_area(gt.source_box) < hi

    for image, match in zip(images, matches):
        for gt in image.gts:
            if in_bin(gt):
                n_gt[gt.class_id] = n_gt.get(gt.class_id, 0) + 1
        for i, det in enumerate(image.detections):
            g = int(match.matched_gt[i])
            if g >= 0:
                if in_bin(image.gts[g]):
                    flag = True
                elif bin_range is not None:
                    continue  # matched an out-of-bin gt: ignore
                else:
                    flag = True
            else:
                flag = False
            entries.setdefault(det.class_id, []).append(
                (-det.score, image.image_id, i, flag)
            )
    return entries, n_gt


def _ap_per_class(entries: dict[int, list], n_gt: dict[int, int]) -> dict[int, Optional[float]]:
    out: dict[int, Optional[float]] = {}
    for class_id in sorted(set(entries) | set(n_gt)):
        rows = sorted(entries.get(class_id, []))
        flags = [r[3] for r in rows]
        out[class_id] = average_precision(flags, n_gt.get(class_id, 0))
    return out


def _safe_mean_ap(per_class: dict[int, Optional[float]]) -> Optional[float]:
    try:
        return mean_ap(per_class)
    except ValueError:
        return None


def _pr_curves(entries: dict[int, list], n_gt: dict[int, int]) -> dict[int, PRCurve]:
    curves = {}
    for class_id, rows in entries.items():
        if n_gt.get(class_id, 0) == 0 or not rows:
            continue
        flags = np.array([r[3] for r in sorted(rows)], dtype=bool)
        tp_cum = np.cumsum(flags)
        curves[class_id] = PRCurve(
            recall=tp_cum / n_gt[class_id],
            precision=tp_cum / np.arange(1, flags.size + 1),
        )
    return curves


def evaluate_detections(
    images: Sequence[ImageEval],
    size_bins: bool = True,
    clutter_bins: bool = False,
) -> EvaluationReport:
    """Accumulate matching over images into the full report.

    Matching never crosses images. Size-binned mAPs are reported only when
    every ground truth carries a source box; clutter deciles require at least
    10 images.
    """
    matches = [
        match_detections(img.detections, img.gts, gsd=img.gsd) for img in images
    ]
    entries, n_gt = _collect_class_flags(images, matches)
    per_class = _ap_per_class(entries, n_gt)
    report = EvaluationReport(
        per_class_ap=per_class,
        mean_ap=_safe_mean_ap(per_class),
        pr_curves=_pr_curves(entries, n_gt),
        n_images=len(images),
    )

    all_boxed = all(gt.source_box is not None for img in images for gt in img.gts)
    any_gt = any(img.gts for img in images)
    if size_bins and all_boxed and any_gt:
        for attr, rng in (
            ("map_small", (0.0, SMALL_AREA_MAX)),
            ("map_medium", (SMALL_AREA_MAX, MEDIUM_AREA_MAX)),
            ("map_large", (MEDIUM_AREA_MAX, np.inf)),
        ):
            bin_entries, bin_n_gt = _collect_class_flags(images, matches, bin_range=rng)
            if sum(bin_n_gt.values()) == 0:
                continue  # no targets of this size anywhere: bin absent
            bin_ap = _ap_per_class(bin_entries, bin_n_gt)
            setattr(report, attr, _safe_mean_ap(bin_ap))

    if clutter_bins:
        report.clutter_bins = clutter_binned_map(images)
    return report


def clutter_binned_map(images: Sequence[ImageEval]) -> list[ClutterBin]:
    """mAP per decile of the per-image annotations-to-pixels ratio.

    Images are ranked by the ratio (ties broken by image id) and split into 10
    percentile bins, 1-10 percent up to 91-100 percent. Requires >= 10 images.
    """
    if len(images) < 10:
        raise ValueError(f"clutter binning needs >= 10 images, got {len(images)}")

    def ratio(img: ImageEval) -> float:
        area = _image_area(img)
        return len(img.gts) / area

    ranked = sorted(images, key=lambda img: (ratio(img), img.image_id))
    n = len(ranked)
    bins = []
    for b in range(10):
        lo = (b * n) // 10
        hi = ((b + 1) * n) // 10
        members = ranked[lo:hi]
        label = f"{10 * b + 1}%-{10 * (b + 1)}%"
        sub = evaluate_detections(members, size_bins=False) if members else None
        bins.append(
            ClutterBin(
                label=label,
                image_ids=[m.image_id for m in members],
                mean_ap=None if sub is None else sub.mean_ap,
            )
        )
    return bins


def _image_area(img: ImageEval) -> float:
    area = getattr(img, "image_area", None)
    return float(area) if area else 1.0


@dataclass
class SizedImageEval(ImageEval):
    """ImageEval that knows its pixel count, needed for clutter ratios."""

    image_area: float = 1.0


def format_aligned_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Left-aligned fixed-width text table with a header rule."""
    cols = [list(map(str, col)) for col in zip(headers, *rows)]
    widths = [max(len(v) for v in col) for col in cols]
    def fmt(values):
        return "  ".join(str(v).ljust(w) for v, w in zip(values, widths)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines) + "\n"


def write_report(report: EvaluationReport, out_dir: str | Path, name: str = "evaluation") -> None:
    """Persist a report: JSON, an aligned text table, and PR-curve CSVs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / f"{name}.json").open("w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    def pct(v: Optional[float]) -> str:
        return "-" if v is None else f"{100 * v:.2f}"

    rows = [["mAP", pct(report.mean_ap)]]
    rows += [["mAP -- S", pct(report.map_small)], ["mAP -- M", pct(report.map_medium)]]
    rows += [["mAP -- L", pct(report.map_large)]]
    rows += [[f"AP class {k}", pct(v)] for k, v in sorted(report.per_class_ap.items())]
    table = format_aligned_table(["Metric", "Value"], rows)
    (out_dir / f"{name}.txt").write_text(table)

    if report.pr_curves:
        curve_dir = out_dir / "pr_curves"
        curve_dir.mkdir(exist_ok=True)
        for class_id, curve in sorted(report.pr_curves.items()):
            with (curve_dir / f"class_{class_id}.csv").open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["recall", "precision"])
                for r, p in zip(curve.recall, curve.precision):
                    writer.writerow([f"{r:.6f}", f"{p:.6f}"])
