"""Anchor-point grids and ground-truth assignment.

Centerpoint targets carry no extent, so the anchor is reduced to a single grid
point per location and assignment is by Euclidean distance. An anchor is
positive when its nearest ground truth lies within ``positive_radius`` strides
of its level; in addition every ground truth claims its single globally
nearest anchor so that no target goes unmatched. The distance threshold, the
stride normalization of offsets, and the routing of targets to pyramid levels
are conventions of this implementation, surfaced in config.

IoU-based assignment and 4-parameter box deltas are kept only for the
horizontal-box baseline detectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import GroundTruthObject

NEGATIVE = -1
IGNORE = -2


@dataclass(frozen=True)
class AnchorLevel:
    """Grid of anchor points for one pyramid level.

    ``points`` has shape (H*W, 2) in row-major order (y outer, x inner), which
    matches a flattened (H, W) convolutional feature map.
    """

    stride: int
    grid_size: tuple[int, int]  # (width, height) in cells
    points: np.ndarray

    @property
    def num_anchors(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class AnchorSet:
    levels: tuple[AnchorLevel, ...]

    @property
    def num_anchors(self) -> int:
        return sum(l.num_anchors for l in self.levels)

    def all_points(self) -> np.ndarray:
        return np.concatenate([l.points for l in self.levels], axis=0)

    def all_strides(self) -> np.ndarray:
        return np.concatenate(
            [np.full(l.num_anchors, l.stride, dtype=np.float64) for l in self.levels]
        )


@dataclass
class AssignmentResult:
    """Per-anchor labels and regression targets, concatenated across levels.

    ``gt_index[i] >= 0`` marks anchor i positive for that ground truth;
    NEGATIVE (-1) is background and IGNORE (-2) is excluded from both losses.
    ``target_offsets`` is stride-normalized and only meaningful at positives.
    """

    gt_index: np.ndarray  # (N,) int64
    target_offsets: np.ndarray  # (N, 2) float64
    level_slices: tuple[slice, ...]

    @property
    def positive_mask(self) -> np.ndarray:
        return self.gt_index >= 0

    @property
    def negative_mask(self) -> np.ndarray:
        return self.gt_index == NEGATIVE


def generate_anchor_points(
    chip_size: int | tuple[int, int], strides: Sequence[int]
) -> AnchorSet:
    """One anchor point per feature-map cell, at cell centers.

    The grid for stride s covers the chip with ceil(size / s) cells per axis;
    the point for cell (i, j) sits at (s/2 + i*s, s/2 + j*s).
    """
    if not strides:
        raise ValueError("strides must be non-empty")
    if list(strides) != sorted(set(strides)):
        raise ValueError(f"strides must be strictly increasing, got {strides}")
    if isinstance(chip_size, int):
        width, height = chip_size, chip_size
    else:
        width, height = chip_size
    levels = []
    for s in strides:
        w = -(-width // s)
        h = -(-height // s)
        xs = s / 2.0 + s * np.arange(w, dtype=np.float64)
        ys = s / 2.0 + s * np.arange(h, dtype=np.float64)
        gx, gy = np.meshgrid(xs, ys)  # row-major: y outer
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        levels.append(AnchorLevel(stride=s, grid_size=(w, h), points=pts))
    return AnchorSet(levels=tuple(levels))


def encode_offsets(anchor_xy: np.ndarray, gt_xy: np.ndarray, stride: float) -> np.ndarray:
    """Stride-normalized offset from anchor to target: (gt - anchor) / stride."""
    if stride <= 0:
        raise ValueError(f"stride must be positive, got {stride}")
    return (np.asarray(gt_xy, dtype=np.float64) - np.asarray(anchor_xy, dtype=np.float64)) / stride


def decode_offsets(anchor_xy: np.ndarray, offsets: np.ndarray, stride: float) -> np.ndarray:
    """Exact inverse of :func:`encode_offsets`."""
    if stride <= 0:
        raise ValueError(f"stride must be positive, got {stride}")
    return np.asarray(anchor_xy, dtype=np.float64) + stride * np.asarray(offsets, dtype=np.float64)


def match_centerpoints(
    anchors: AnchorSet,
    gts: Sequence[GroundTruthObject],
    positive_radius: float = 1.0,
) -> AssignmentResult:
    """Assign ground-truth centerpoints to anchor points by Euclidean distance.

    An anchor is positive iff the distance to its nearest ground truth is at
    most ``positive_radius * stride`` of its level, and its target is that
    nearest ground truth (ties go to the lower ground-truth index). Every
    ground truth then claims its globally nearest anchor as a forced positive;
    an anchor already claimed by an earlier ground truth is not re-claimed.
    """
    if positive_radius <= 0:
        raise ValueError(f"positive_radius must be positive, got {positive_radius}")
    points = anchors.all_points()
    strides = anchors.all_strides()
    n = points.shape[0]
    gt_index = np.full(n, NEGATIVE, dtype=np.int64)
    offsets = np.zeros((n, 2), dtype=np.float64)

    slices = []
    start = 0
    for level in anchors.levels:
        slices.append(slice(start, start + level.num_anchors))
        start += level.num_anchors

    if gts:
        gt_xy = np.array([[g.center.x, g.center.y] for g in gts], dtype=np.float64)
        d = np.linalg.norm(points[:, None, :] - gt_xy[None, :, :], axis=2)  # (N, G)
        nearest = np.argmin(d, axis=1)  # ties -> lower gt index
        nearest_dist = d[np.arange(n), nearest]
        positive = nearest_dist <= positive_radius * strides
        gt_index[positive] = nearest[positive]

        # forced positives: each gt claims its single globally nearest anchor
        # (ties -> first anchor in level-then-row-major order)
        claimed = np.zeros(n, dtype=bool)
        for g in range(len(gts)):
            a = int(np.argmin(d[:, g]))
            if not claimed[a]:
                gt_index[a] = g
                claimed[a] = True

        pos = gt_index >= 0
        offsets[pos] = (gt_xy[gt_index[pos]] - points[pos]) / strides[pos, None]

    return AssignmentResult(
        gt_index=gt_index, target_offsets=offsets, level_slices=tuple(slices)
    )


# --- horizontal-box baseline machinery ---


def generate_anchor_boxes(
    anchors: AnchorSet,
    scales: Sequence[float] = (2.0, 2.83, 4.0),
    aspects: Sequence[float] = (0.5, 1.0, 2.0),
) -> list[np.ndarray]:
    """Anchor boxes per level, (H*W*A, 4) with A = len(scales) * len(aspects).

    Box sizes are stride * scale, with aspect = width / height. Ordering is
    location-major then anchor index, matching a head that emits A*C channels.
    """
    out = []
    for level in anchors.levels:
        sizes = []
        for scale in scales:
            base = level.stride * scale
            for aspect in aspects:
                w = base * np.sqrt(aspect)
                h = base / np.sqrt(aspect)
                sizes.append((w, h))
        wh = np.array(sizes, dtype=np.float64)  # (A, 2)
        centers = level.points  # (N, 2)
        boxes = np.empty((centers.shape[0], wh.shape[0], 4), dtype=np.float64)
        boxes[:, :, 0] = centers[:, None, 0] - wh[None, :, 0] / 2
        boxes[:, :, 1] = centers[:, None, 1] - wh[None, :, 1] / 2
        boxes[:, :, 2] = centers[:, None, 0] + wh[None, :, 0] / 2
        boxes[:, :, 3] = centers[:, None, 1] + wh[None, :, 1] / 2
        out.append(boxes.reshape(-1, 4))
    return out


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (N, 4) / (M, 4) arrays of x1y1x2y2 boxes."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0, None)
    inter = wh[:, :, 0] * wh[:, :, 1]
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def iou_match(
    anchor_boxes: np.ndarray,
    gt_boxes: np.ndarray,
    positive_threshold: float = 0.5,
    negative_threshold: float = 0.4,
    allow_low_quality: bool = True,
) -> np.ndarray:
    """Standard IoU assignment: returns per-anchor gt index / NEGATIVE / IGNORE.

    Anchors with best IoU >= positive_threshold are positive, < negative_threshold
    negative, in between IGNORE. With ``allow_low_quality`` each ground truth
    additionally claims its highest-IoU anchor (the usual RetinaNet rule).
    """
    n = anchor_boxes.shape[0]
    labels = np.full(n, NEGATIVE, dtype=np.int64)
    if gt_boxes.shape[0] == 0:
        return labels
    ious = iou_matrix(anchor_boxes, gt_boxes)
    best_gt = np.argmax(ious, axis=1)
    best_iou = ious[np.arange(n), best_gt]
    labels[best_iou >= positive_threshold] = best_gt[best_iou >= positive_threshold]
    labels[(best_iou >= negative_threshold) & (best_iou < positive_threshold)] = IGNORE
    if allow_low_quality:
        for g in range(gt_boxes.shape[0]):
            if ious[:, g].max() > 0:
                labels[int(np.argmax(ious[:, g]))] = g
    return labels


def encode_box_deltas(anchor_boxes: np.ndarray, gt_boxes: np.ndarray) -> np.ndarray:
    """Center/size log deltas (dx, dy, dw, dh) from anchors to targets."""
    a = np.asarray(anchor_boxes, dtype=np.float64)
    g = np.asarray(gt_boxes, dtype=np.float64)
    aw = a[:, 2] - a[:, 0]
    ah = a[:, 3] - a[:, 1]
    ax = a[:, 0] + aw / 2
    ay = a[:, 1] + ah / 2
    gw = np.clip(g[:, 2] - g[:, 0], 1e-6, None)
    gh = np.clip(g[:, 3] - g[:, 1], 1e-6, None)
    gx = g[:, 0] + (g[:, 2] - g[:, 0]) / 2
    gy = g[:, 1] + (g[:, 3] - g[:, 1]) / 2
    return np.stack(
        [(gx - ax) / aw, (gy - ay) / ah, np.log(gw / aw), np.log(gh / ah)], axis=1
    )


def decode_box_deltas(anchor_boxes: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Inverse of :func:`encode_box_deltas`."""
    a = np.asarray(anchor_boxes, dtype=np.float64)
    d = np.asarray(deltas, dtype=np.float64)
    aw = a[:, 2] - a[:, 0]
    ah = a[:, 3] - a[:, 1]
    ax = a[:, 0] + aw / 2
    ay = a[:, 1] + ah / 2
    # clamp dw/dh so exp cannot overflow on wild predictions
    dw = np.clip(d[:, 2], None, 8.0)
    dh = np.clip(d[:, 3], None, 8.0)
    cx = ax + d[:, 0] * aw
    cy = ay + d[:, 1] * ah
    w = aw * np.exp(dw)
    h = ah * np.exp(dh)
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=1)
