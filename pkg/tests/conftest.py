"""Shared fixtures: synthetic scenes, random label sets, on-disk dataset trees."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from sidelane.culane import label_path_for, write_lines_file
from sidelane.imaging import BinaryMask, ImageBuffer, save_image, save_mask
from sidelane.labels import LabelSet, LaneLabel, PointF


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def random_labelset(
    rng: np.random.Generator,
    frame_w: int = 1640,
    frame_h: int = 590,
    min_lanes: int = 0,
    max_lanes: int = 4,
) -> LabelSet:
    n = int(rng.integers(min_lanes, max_lanes + 1))
    lanes = []
    for _ in range(n):
        k = int(rng.integers(2, 12))
        ys = np.unique(rng.uniform(0.0, frame_h, size=k + 4))[::-1][:k]
        if len(ys) < 2:
            ys = np.array([frame_h * 0.9, frame_h * 0.4])
        xs = rng.uniform(-60.0, frame_w + 60.0, size=len(ys))
        lanes.append(
            LaneLabel(tuple(PointF(float(x), float(y)) for x, y in zip(xs, ys)))
        )
    return LabelSet(tuple(lanes), frame_w=frame_w, frame_h=frame_h)


def straight_lane(
    x_bottom: float, slope: float, y_bottom: float, y_top: float, step: float = 20.0
) -> LaneLabel:
    """Straight lane x(y) = x_bottom + (y_bottom - y) * slope, sampled bottom-up."""
    points = []
    y = y_bottom
    while y >= y_top:
        points.append(PointF(x_bottom + (y_bottom - y) * slope, y))
        y -= step
    return LaneLabel(tuple(points))


def draw_strip(arr: np.ndarray, x_at_y, half_width: float, value: int) -> None:
    """Paint a vertical-ish strip of the given half width onto a 2-D or 3-D array."""
    h = arr.shape[0]
    w = arr.shape[1]
    for y in range(h):
        x = x_at_y(float(y))
        lo = max(0, int(math.ceil(x - half_width)))
        hi = min(w - 1, int(math.floor(x + half_width)))
        if lo <= hi:
            arr[y, lo : hi + 1] = value


def road_frame(
    frame_w: int,
    frame_h: int,
    lanes: list[tuple[float, float]],
    strip_half_width: float = 4.0,
    asphalt: int = 70,
    paint: int = 230,
    sky: int = 200,
    sky_rows: float = 0.3,
) -> tuple[ImageBuffer, LabelSet]:
    """Flat synthetic road scene with straight painted lanes.

    ``lanes`` holds (x_at_bottom, slope) pairs; slope is dx per row upward.
    Returns the RGB frame and ground-truth centerline labels.
    """
    arr = np.full((frame_h, frame_w, 3), asphalt, dtype=np.uint8)
    n_sky = int(sky_rows * frame_h)
    if n_sky:
        arr[:n_sky] = sky
    gt = []
    for x_bottom, slope in lanes:
        y0 = frame_h - 1

        def x_at(y, xb=x_bottom, s=slope, y0=y0):
            return xb + (y0 - y) * s

        draw_strip(arr[n_sky:], lambda y: x_at(y + n_sky), strip_half_width, paint)
        gt.append(
            straight_lane(x_bottom, slope, y_bottom=float(y0), y_top=float(n_sky) + 1.0)
        )
    return ImageBuffer(arr), LabelSet(tuple(gt[:4]), frame_w=frame_w, frame_h=frame_h)


def build_dataset(
    root: Path, frames: list[tuple[str, ImageBuffer, LabelSet | None]]
) -> Path:
    """Write images (+ optional sibling label files) under root, CULane layout."""
    for rel, img, labels in frames:
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        save_image(img, path)
        if labels is not None:
            (root / label_path_for(rel)).write_text(write_lines_file(labels))
    return root


def checker(frame_w: int, frame_h: int, cell: int = 8) -> ImageBuffer:
    ys, xs = np.mgrid[0:frame_h, 0:frame_w]
    bits = ((xs // cell) + (ys // cell)) % 2 == 0
    return ImageBuffer(np.where(bits, 255, 0).astype(np.uint8))


def rect_mask(frame_w: int, frame_h: int, x0: int, y0: int, w: int, h: int) -> BinaryMask:
    bits = np.zeros((frame_h, frame_w), dtype=bool)
    bits[y0 : y0 + h, x0 : x0 + w] = True
    return BinaryMask(bits)
