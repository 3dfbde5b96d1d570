"""Axis-aligned box geometry: the area/IoU primitives under fusion and matching."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True, slots=True)
class Box:
    """Axis-aligned rectangle in pixel coordinates, corner format (x1, y1, x2, y2).

    Width and height are strictly positive and all coordinates finite; invalid
    boxes cannot be constructed, which keeps every downstream IoU and weighted
    average well-defined.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for name in ("x1", "y1", "x2", "y2"):
            value = getattr(self, name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise ValueError(f"box coordinate {name} is not a number: {value!r}") from None
            if not math.isfinite(value):
                raise ValueError(f"box coordinate {name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(
                f"degenerate box: need x1 < x2 and y1 < y2, got "
                f"({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    def corners(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


def area(b: Box) -> float:
    """Area of a box; strictly positive by construction."""
    return (b.x2 - b.x1) * (b.y2 - b.y1)


def intersection_area(a: Box, b: Box) -> float:
    """Overlap area of two boxes; 0.0 when disjoint or merely edge-touching."""
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    if w <= 0.0:
        return 0.0
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if h <= 0.0:
        return 0.0
    return w * h


def iou(a: Box, b: Box) -> float:
    """Intersection over union in [0, 1]; exactly 1.0 for identical boxes."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (area(a) + area(b) - inter)
