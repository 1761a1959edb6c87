"""Axis-aligned boxes stored as center + size, and the IoU reward measure."""

from __future__ import annotations

import math
from dataclasses import dataclass

# absorbs float rounding when a box sits flush against another box's edge
EDGE_TOL = 1e-9


@dataclass(frozen=True)
class AxisBox:
    center_x: float
    center_y: float
    size_w: float
    size_h: float

    def __post_init__(self):
        vals = (self.center_x, self.center_y, self.size_w, self.size_h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"box fields must be finite, got {vals}")
        if self.size_w <= 0 or self.size_h <= 0:
            raise ValueError(f"box size must be positive, got {self.size_w}x{self.size_h}")

    @property
    def area(self) -> float:
        return self.size_w * self.size_h

    @property
    def x_min(self) -> float:
        return self.center_x - self.size_w / 2

    @property
    def x_max(self) -> float:
        return self.center_x + self.size_w / 2

    @property
    def y_min(self) -> float:
        return self.center_y - self.size_h / 2

    @property
    def y_max(self) -> float:
        return self.center_y + self.size_h / 2

    def translated(self, dx: float = 0.0, dy: float = 0.0) -> AxisBox:
        return AxisBox(self.center_x + dx, self.center_y + dy, self.size_w, self.size_h)

    def moved_to(self, cx: float, cy: float) -> AxisBox:
        return AxisBox(cx, cy, self.size_w, self.size_h)


def _overlap(a_lo: float, a_hi: float, b_lo: float, b_hi: float) -> float:
    return max(0.0, min(a_hi, b_hi) - max(a_lo, b_lo))


def intersection_area(a: AxisBox, b: AxisBox) -> float:
    dx = _overlap(a.x_min, a.x_max, b.x_min, b.x_max)
    dy = _overlap(a.y_min, a.y_max, b.y_min, b.y_max)
    return dx * dy


def iou(a: AxisBox, b: AxisBox) -> float:
    """Intersection over union; exactly 1.0 for identical boxes."""
    if a == b:
        return 1.0
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    return min(1.0, max(0.0, inter / union))


def contains(outer: AxisBox, inner: AxisBox, tol: float = EDGE_TOL) -> bool:
    """Closed containment: an inner edge touching the outer edge counts as inside."""
    return (
        inner.x_min >= outer.x_min - tol
        and inner.x_max <= outer.x_max + tol
        and inner.y_min >= outer.y_min - tol
        and inner.y_max <= outer.y_max + tol
    )
