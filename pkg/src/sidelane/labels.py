"""Lane annotation types: points, per-lane polylines, and per-frame label sets.

Coordinates live in image space (x right, y down). A lane is an ordered
polyline running from the bottom of the image upward, so y is strictly
decreasing along the point list. A frame carries at most four lanes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

MAX_LANES = 4
DEFAULT_FRAME_W = 1640
DEFAULT_FRAME_H = 590


class PointF(NamedTuple):
    """Sub-pixel image coordinate. May lie outside the frame."""

    x: float
    y: float


def normalize_points(points: Iterable[tuple[float, float]]) -> list[PointF]:
    """Sort points by strictly decreasing y; exact-duplicate y keeps the first seen.

    Raises ValueError on non-finite coordinates.
    """
    pts = [PointF(float(x), float(y)) for x, y in points]
    for p in pts:
        if not (math.isfinite(p.x) and math.isfinite(p.y)):
            raise ValueError(f"non-finite lane point {p}")
    # stable sort keeps original order among equal y, then we keep the first
    pts.sort(key=lambda p: -p.y)
    out: list[PointF] = []
    for p in pts:
        if out and p.y == out[-1].y:
            continue
        out.append(p)
    return out


@dataclass(frozen=True)
class LaneLabel:
    """One lane polyline, >= 2 points, y strictly decreasing (bottom first)."""

    points: tuple[PointF, ...]

    def __post_init__(self):
        pts = tuple(PointF(float(p[0]), float(p[1])) for p in self.points)
        if len(pts) < 2:
            raise ValueError(f"lane needs at least 2 points, got {len(pts)}")
        for p in pts:
            if not (math.isfinite(p.x) and math.isfinite(p.y)):
                raise ValueError(f"non-finite lane point {p}")
        for a, b in zip(pts, pts[1:]):
            if not b.y < a.y:
                raise ValueError("lane points must have strictly decreasing y")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_unordered(cls, points: Iterable[tuple[float, float]]) -> "LaneLabel":
        """Build a lane from arbitrary point order, normalizing the y ordering."""
        return cls(tuple(normalize_points(points)))

    def as_array(self) -> np.ndarray:
        """(n, 2) float64 array of (x, y)."""
        return np.array([(p.x, p.y) for p in self.points], dtype=np.float64)

    @property
    def bottom(self) -> PointF:
        return self.points[0]

    @property
    def top(self) -> PointF:
        return self.points[-1]

    def x_at(self, y: float) -> float:
        """Interpolate x at row y, clamping to the nearest endpoint outside the span."""
        pts = self.points
        if y >= pts[0].y:
            return pts[0].x
        if y <= pts[-1].y:
            return pts[-1].x
        for a, b in zip(pts, pts[1:]):
            if b.y <= y <= a.y:
                t = (a.y - y) / (a.y - b.y)
                return a.x + t * (b.x - a.x)
        return pts[-1].x  # unreachable for valid lanes


def _sort_key_row(lanes: tuple[LaneLabel, ...]) -> float:
    # lowest row every lane can be evaluated at (largest y covered by all,
    # clamped interpolation makes this well defined for any y)
    return min(lane.bottom.y for lane in lanes)


@dataclass(frozen=True)
class LabelSet:
    """All lanes of one frame plus the frame dimensions they are expressed in.

    Lanes are ordered left to right by x at the lowest row shared by all
    lanes, so serialization is deterministic.
    """

    lanes: tuple[LaneLabel, ...] = ()
    frame_w: int = DEFAULT_FRAME_W
    frame_h: int = DEFAULT_FRAME_H

    def __post_init__(self):
        lanes = tuple(self.lanes)
        if len(lanes) > MAX_LANES:
            raise ValueError(f"at most {MAX_LANES} lanes per frame, got {len(lanes)}")
        if lanes:
            y_star = _sort_key_row(lanes)
            order = sorted(range(len(lanes)), key=lambda i: (lanes[i].x_at(y_star), i))
            lanes = tuple(lanes[i] for i in order)
        object.__setattr__(self, "lanes", lanes)

    def __len__(self) -> int:
        return len(self.lanes)

    def __iter__(self):
        return iter(self.lanes)
