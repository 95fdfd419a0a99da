"""Chip sampling with GSD-aware resizing, plus training augmentations.

Half of the chips are sampled as a random window of a random image and half
around a uniformly chosen example of a uniformly chosen class. When the scene
GSD is known the image is first resampled to a target GSD drawn from
``gsd_range``; otherwise a uniform resize factor is drawn from ``scale_range``.

Objects whose centers fall inside the sampled window are kept (even if their
source box is clipped); objects whose centers fall outside are dropped.
Images smaller than the chip after resizing are zero-padded bottom-right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..geometry import (
    Box,
    GroundTruthObject,
    HorizontalBox,
    Point2D,
    RotatedBox,
    normalize_angle,
)
from .annotations import Scene, scene_pixels


@dataclass(frozen=True)
class SamplingPolicy:
    chip_size: int = 800
    random_fraction: float = 0.5
    gsd_range: tuple[float, float] = (0.10, 0.15)
    scale_range: tuple[float, float] = (2.0 / 3.0, 1.5)
    class_balance_retries: int = 10

    def __post_init__(self):
        if self.chip_size <= 0:
            raise ValueError(f"chip_size must be positive, got {self.chip_size}")
        if not 0.0 <= self.random_fraction <= 1.0:
            raise ValueError(f"random_fraction must be in [0, 1], got {self.random_fraction}")
        for name, (lo, hi) in (("gsd_range", self.gsd_range), ("scale_range", self.scale_range)):
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must be ordered and positive, got ({lo}, {hi})")


@dataclass
class Chip:
    """A fixed-size training window cut from a (resized) scene.

    ``origin`` is the window origin in source-scene coordinates and ``scale``
    the resize factor, so chip coords map back via src = chip / scale + origin.
    """

    pixels: np.ndarray  # (S, S, 3) float32 in [0, 1]
    origin: Point2D
    scale: float
    objects: list[GroundTruthObject] = field(default_factory=list)
    image_id: str = ""
    gsd: Optional[float] = None

    @property
    def size(self) -> int:
        return self.pixels.shape[0]


def _resize_pixels(pixels: np.ndarray, scale: float) -> tuple[np.ndarray, float, float]:
    """Bilinear resize by ``scale``; returns pixels and the actual per-axis factors."""
    h, w = pixels.shape[:2]
    rw = max(1, round(w * scale))
    rh = max(1, round(h * scale))
    if (rw, rh) == (w, h):
        return pixels, 1.0, 1.0
    t = torch.from_numpy(np.ascontiguousarray(pixels)).permute(2, 0, 1).unsqueeze(0)
    out = F.interpolate(t, size=(rh, rw), mode="bilinear", align_corners=False)
    return out.squeeze(0).permute(1, 2, 0).contiguous().numpy(), rw / w, rh / h


def _transform_box(box: Box, sx: float, sy: float, dx: float, dy: float) -> Box:
    if isinstance(box, RotatedBox):
        # anisotropy from integer rounding of the resize is < 0.1 percent, so
        # the rotated box scales by sx with its angle preserved
        return RotatedBox(
            Point2D(box.center.x * sx + dx, box.center.y * sy + dy),
            box.width * sx,
            box.height * sx,
            box.angle,
        )
    return HorizontalBox(
        box.x_min * sx + dx, box.y_min * sy + dy, box.x_max * sx + dx, box.y_max * sy + dy
    )


def _transform_objects(
    objects: Sequence[GroundTruthObject],
    sx: float,
    sy: float,
    ox: float,
    oy: float,
    chip_size: int,
) -> list[GroundTruthObject]:
    out = []
    for obj in objects:
        x = obj.center.x * sx - ox
        y = obj.center.y * sy - oy
        if 0 <= x < chip_size and 0 <= y < chip_size:
            box = None
            if obj.source_box is not None:
                box = _transform_box(obj.source_box, sx, sy, -ox, -oy)
            out.append(GroundTruthObject(Point2D(x, y), obj.class_id, source_box=box))
    return out


def _draw_scale(scene: Scene, policy: SamplingPolicy, rng: np.random.Generator):
    """Resize factor plus the effective chip GSD (None when the scene has none)."""
    if scene.gsd is not None:
        target = rng.uniform(*policy.gsd_range)
        return scene.gsd / target, target
    return rng.uniform(*policy.scale_range), None


def _extract_window(resized: np.ndarray, ox: int, oy: int, chip_size: int) -> np.ndarray:
    rh, rw = resized.shape[:2]
    crop = resized[oy : min(oy + chip_size, rh), ox : min(ox + chip_size, rw)]
    if crop.shape[0] == chip_size and crop.shape[1] == chip_size:
        return np.ascontiguousarray(crop)
    padded = np.zeros((chip_size, chip_size, 3), dtype=np.float32)
    padded[: crop.shape[0], : crop.shape[1]] = crop
    return padded


def _finish_chip(scene, pixels, scale_req, sx, sy, ox, oy, chip_size, gsd):
    chip_pixels = _extract_window(pixels, ox, oy, chip_size)
    objects = _transform_objects(scene.objects, sx, sy, ox, oy, chip_size)
    return Chip(
        pixels=chip_pixels,
        origin=Point2D(ox / sx, oy / sy),
        scale=scale_req,
        objects=objects,
        image_id=scene.image_id,
        gsd=gsd,
    )


def sample_chip(
    scenes: Sequence[Scene], policy: SamplingPolicy, rng: np.random.Generator
) -> Chip:
    """Draw one training chip from a scene set.

    With probability ``random_fraction`` the window is uniform over a uniform
    random scene; otherwise a class is sampled uniformly among classes present,
    an example of it uniformly, and the window is placed uniformly among
    windows containing that example. When the (resized) image cannot fit a
    full window the draw is retried with a fresh scale up to
    ``class_balance_retries`` times, then the short side is zero-padded.
    """
    if not scenes:
        raise ValueError("scene set is empty")
    size = policy.chip_size

    if rng.random() < policy.random_fraction:
        scene = scenes[rng.integers(len(scenes))]
        scale, gsd = _draw_scale(scene, policy, rng)
        pixels, sx, sy = _resize_pixels(scene_pixels(scene), scale)
        rh, rw = pixels.shape[:2]
        ox = int(rng.integers(0, max(rw - size, 0) + 1))
        oy = int(rng.integers(0, max(rh - size, 0) + 1))
        return _finish_chip(scene, pixels, scale, sx, sy, ox, oy, size, gsd)

    # class-balanced branch
    by_class: dict[int, list[tuple[int, int]]] = {}
    for si, scene in enumerate(scenes):
        for gi, obj in enumerate(scene.objects):
            by_class.setdefault(obj.class_id, []).append((si, gi))
    if not by_class:
        # degenerate scene set with no objects: fall back to a random window
        return sample_chip(scenes, replace(policy, random_fraction=1.0), rng)
    classes = sorted(by_class)
    instances = by_class[classes[rng.integers(len(classes))]]
    si, gi = instances[rng.integers(len(instances))]
    scene = scenes[si]

    last = None
    for attempt in range(max(policy.class_balance_retries, 1)):
        scale, gsd = _draw_scale(scene, policy, rng)
        pixels, sx, sy = _resize_pixels(scene_pixels(scene), scale)
        rh, rw = pixels.shape[:2]
        cx = scene.objects[gi].center.x * sx
        cy = scene.objects[gi].center.y * sy

        def origin_range(c: float, extent: int) -> Optional[tuple[int, int]]:
            lo = max(0, math.floor(c - size) + 1)
            hi = min(extent - size, math.floor(min(c, extent - 1e-9)))
            return (lo, hi) if extent >= size and hi >= lo else None

        rx = origin_range(cx, rw)
        ry = origin_range(cy, rh)
        if rx is not None and ry is not None:
            ox = int(rng.integers(rx[0], rx[1] + 1))
            oy = int(rng.integers(ry[0], ry[1] + 1))
            return _finish_chip(scene, pixels, scale, sx, sy, ox, oy, size, gsd)
        last = (pixels, scale, sx, sy, gsd)

    # image smaller than the chip in some axis: anchor at 0 and pad
    pixels, scale, sx, sy, gsd = last
    return _finish_chip(scene, pixels, scale, sx, sy, 0, 0, size, gsd)


# --- augmentation ---


def rotate90_chip(chip: Chip, k: int) -> Chip:
    """Rotate a square chip by k * 90 degrees (the np.rot90 direction).

    One application maps a point (x, y) to (y, S - x) for chip side S.
    """
    k = k % 4
    if k == 0:
        return chip
    if chip.pixels.shape[0] != chip.pixels.shape[1]:
        raise ValueError("rotate90_chip requires a square chip")
    s = float(chip.size)
    pixels = np.ascontiguousarray(np.rot90(chip.pixels, k, axes=(0, 1)))
    objects = chip.objects
    for _ in range(k):
        objects = [
            GroundTruthObject(
                Point2D(o.center.y, s - o.center.x),
                o.class_id,
                source_box=None if o.source_box is None else _rotate_box_90(o.source_box, s),
            )
            for o in objects
        ]
    return replace(chip, pixels=pixels, objects=objects)


def _rotate_box_90(box: Box, s: float) -> Box:
    if isinstance(box, RotatedBox):
        return RotatedBox(
            Point2D(box.center.y, s - box.center.x),
            box.width,
            box.height,
            normalize_angle(box.angle - math.pi / 2),
        )
    return HorizontalBox(box.y_min, s - box.x_max, box.y_max, s - box.x_min)


def hflip_chip(chip: Chip) -> Chip:
    """Mirror a chip left-right: x maps to S - x."""
    s = float(chip.pixels.shape[1])
    pixels = np.ascontiguousarray(chip.pixels[:, ::-1])
    objects = [
        GroundTruthObject(
            Point2D(s - o.center.x, o.center.y),
            o.class_id,
            source_box=None if o.source_box is None else _hflip_box(o.source_box, s),
        )
        for o in chip.objects
    ]
    return replace(chip, pixels=pixels, objects=objects)


def _hflip_box(box: Box, s: float) -> Box:
    if isinstance(box, RotatedBox):
        return RotatedBox(
            Point2D(s - box.center.x, box.center.y),
            box.width,
            box.height,
            normalize_angle(math.pi - box.angle),
        )
    return HorizontalBox(s - box.x_max, box.y_min, s - box.x_min, box.y_max)


def color_jitter(
    chip: Chip, brightness: float = 1.0, contrast: float = 1.0, saturation: float = 1.0
) -> Chip:
    """Scale brightness/contrast/saturation; pixels only, coordinates untouched."""
    img = chip.pixels.astype(np.float32)
    img = img * brightness
    gray = img.mean(axis=2, keepdims=True)
    img = gray + (img - gray) * saturation
    mean = img.mean()
    img = mean + (img - mean) * contrast
    return replace(chip, pixels=np.clip(img, 0.0, 1.0))


def augment(chip: Chip, rng: np.random.Generator, color_strength: float = 0.2) -> Chip:
    """90-degree random rotation, random horizontal flip, and color distortion."""
    out = rotate90_chip(chip, int(rng.integers(4)))
    if rng.random() < 0.5:
        out = hflip_chip(out)
    b, c, s = rng.uniform(1 - color_strength, 1 + color_strength, size=3)
    return color_jitter(out, brightness=b, contrast=c, saturation=s)
