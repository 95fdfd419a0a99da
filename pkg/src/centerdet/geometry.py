"""Annotation geometry: points, horizontal/rotated boxes, and conversions.

Coordinates are continuous image coordinates: the pixel at row r, column c
occupies the half-open square [c, c+1) x [r, r+1), so an image of width W
spans x in [0, W]. All angles are radians, normalized to [-pi, pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

TWO_PI = 2.0 * math.pi


def normalize_angle(angle: float) -> float:
    """Map an angle in radians onto [-pi, pi)."""
    a = math.fmod(angle + math.pi, TWO_PI)
    if a < 0:
        a += TWO_PI
    return a - math.pi


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"point coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class HorizontalBox:
    """Axis-aligned box given by its min/max corners in pixels."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for v in (self.x_min, self.y_min, self.x_max, self.y_max):
            if not math.isfinite(v):
                raise ValueError("box coordinates must be finite")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(
                f"inverted box: ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class RotatedBox:
    """Object-aligned box: center, side lengths, and rotation angle.

    ``angle`` is the rotation of the box's width axis from the image x axis,
    stored normalized to [-pi, pi). Zero-size boxes are legal.
    """

    center: Point2D
    width: float
    height: float
    angle: float

    def __post_init__(self):
        if self.width < 0 or self.height < 0:
            raise ValueError(f"negative box size: {self.width} x {self.height}")
        if not math.isfinite(self.angle):
            raise ValueError("angle must be finite")
        object.__setattr__(self, "angle", normalize_angle(self.angle))

    @property
    def area(self) -> float:
        return self.width * self.height

    def corners(self) -> list[Point2D]:
        """The four corners, in box-local (+-w/2, +-h/2) order."""
        c, s = math.cos(self.angle), math.sin(self.angle)
        hw, hh = 0.5 * self.width, 0.5 * self.height
        out = []
        for dx, dy in ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)):
            out.append(
                Point2D(self.center.x + dx * c - dy * s, self.center.y + dx * s + dy * c)
            )
        return out


Box = Union[HorizontalBox, RotatedBox]


@dataclass(frozen=True)
class GroundTruthObject:
    """A labeled object: centerpoint, class, and optionally the box it came from.

    The source box is retained only for size binning and for the box-baseline
    detectors; the centerpoint detectors never see it.
    """

    center: Point2D
    class_id: int
    source_box: Optional[Box] = None

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class_id must be >= 0, got {self.class_id}")
        if self.source_box is not None:
            c = box_center(self.source_box)
            if abs(c.x - self.center.x) > 1e-6 or abs(c.y - self.center.y) > 1e-6:
                raise ValueError(
                    f"center {self.center} does not match source box center {c}"
                )


def rotated_to_horizontal(box: RotatedBox) -> HorizontalBox:
    """Tightest axis-aligned box containing a rotated box."""
    xs = []
    ys = []
    for p in box.corners():
        xs.append(p.x)
        ys.append(p.y)
    return HorizontalBox(min(xs), min(ys), max(xs), max(ys))


def box_center(box: Box) -> Point2D:
    """Center of a box: midpoint of extremes, or the stored center."""
    if isinstance(box, RotatedBox):
        return box.center
    return Point2D(0.5 * (box.x_min + box.x_max), 0.5 * (box.y_min + box.y_max))


def box_area(box: Box) -> float:
    return box.area


def to_horizontal(box: Box) -> HorizontalBox:
    """Coerce either box kind to an axis-aligned box."""
    if isinstance(box, RotatedBox):
        return rotated_to_horizontal(box)
    return box


def center_distance(a: Point2D, b: Point2D, gsd: Optional[float] = None) -> float:
    """Euclidean distance between two points, in meters when ``gsd`` is given.

    ``gsd`` is the ground sample distance in meters/pixel and must be positive.
    """
    if gsd is not None and gsd <= 0:
        raise ValueError(f"gsd must be positive, got {gsd}")
    d = math.hypot(a.x - b.x, a.y - b.y)
    return d * gsd if gsd is not None else d


def impute_square_box(center: Point2D, window_size: float) -> HorizontalBox:
    """Square box of side ``window_size`` centered on ``center``."""
    if window_size <= 0:
        raise ValueError(f"window_size must be positive, got {window_size}")
    half = 0.5 * window_size
    return HorizontalBox(center.x - half, center.y - half, center.x + half, center.y + half)
