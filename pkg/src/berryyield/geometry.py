"""Axis-aligned box arithmetic in image (or planar field) coordinates.

Boxes are corner pairs with the origin at the top-left and y growing
downward. Containment is half-open, ``[min, max)``, so a point on an edge
shared by two abutting boxes belongs to exactly one of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"point coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class BoundingBox:
    """Real-valued box with ``x_min < x_max`` and ``y_min < y_max``."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"box has zero or negative extent: {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def translate(self, dx: float, dy: float) -> BoundingBox:
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def clip(self, x_min: float, y_min: float, x_max: float, y_max: float) -> BoundingBox | None:
        """Intersect with a rectangle; ``None`` when nothing of positive area remains."""
        nx0 = max(self.x_min, x_min)
        ny0 = max(self.y_min, y_min)
        nx1 = min(self.x_max, x_max)
        ny1 = min(self.y_max, y_max)
        if nx0 >= nx1 or ny0 >= ny1:
            return None
        return BoundingBox(nx0, ny0, nx1, ny1)


def area(b: BoundingBox) -> float:
    return (b.x_max - b.x_min) * (b.y_max - b.y_min)


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 for disjoint boxes, exactly 1 for equal ones."""
    if a == b:
        return 1.0
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (area(a) + area(b) - inter)


def iou_many(box: BoundingBox, others: np.ndarray) -> np.ndarray:
    """IoU of ``box`` against an ``(n, 4)`` array of corner boxes.

    Uses the same operation order as :func:`iou`, so results agree bitwise.
    """
    if len(others) == 0:
        return np.zeros(0)
    x0, y0, x1, y1 = others[:, 0], others[:, 1], others[:, 2], others[:, 3]
    w = np.minimum(box.x_max, x1) - np.maximum(box.x_min, x0)
    h = np.minimum(box.y_max, y1) - np.maximum(box.y_min, y0)
    inter = np.where((w > 0) & (h > 0), w * h, 0.0)
    union = area(box) + (x1 - x0) * (y1 - y0) - inter
    out = np.divide(inter, union, out=np.zeros_like(inter), where=inter > 0)
    same = (x0 == box.x_min) & (y0 == box.y_min) & (x1 == box.x_max) & (y1 == box.y_max)
    out[same] = 1.0
    return out


def boxes_array(boxes) -> np.ndarray:
    """Stack boxes into an ``(n, 4)`` float array."""
    if not boxes:
        return np.zeros((0, 4))
    return np.array([b.as_tuple() for b in boxes], dtype=float)


def center(b: BoundingBox) -> Point2D:
    return Point2D((b.x_min + b.x_max) / 2, (b.y_min + b.y_max) / 2)


def contains_point(b: BoundingBox, p: Point2D) -> bool:
    return b.x_min <= p.x < b.x_max and b.y_min <= p.y < b.y_max


def distance(p: Point2D, q: Point2D) -> float:
    return math.hypot(p.x - q.x, p.y - q.y)
