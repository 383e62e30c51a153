"""Semi-automatic lane labeling: windowed-DCT edge map, Hough lines, anchor sampling.

The stage chain for one frame is undistort, resize to the CULane frame size
(1640x590), grayscale, sliding-DCT edge extraction, Hough line voting, then
sampling the surviving lines at fixed anchor rows to produce CULane-format
polylines. Every knob lives in :class:`LabelerProfile` so an operator can
retune per driving sequence and re-run.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .imaging import BinaryMask, ImageBuffer, resize_bilinear, to_grayscale
from .geometry import CameraModel, undistort_image
from .labels import DEFAULT_FRAME_H, DEFAULT_FRAME_W, LabelSet, LaneLabel, PointF

HORIZONTAL_COS_EPS = 1e-6
ANCHOR_X_MARGIN = 50.0


def _default_anchor_rows() -> tuple[float, ...]:
    return tuple(float(y) for y in range(589, 229, -20))


@dataclass(frozen=True)
class LabelerProfile:
    """Tunable parameters of the labeling chain, adjusted per sequence by a human."""

    sdct_window: int = 8
    edge_threshold: float = 0.15
    hough_rho_res: float = 1.0
    hough_theta_res: float = math.pi / 360.0
    theta_min: float = 0.26
    theta_max: float = 1.31
    accumulator_min: int = 120
    anchor_rows: tuple[float, ...] = field(default_factory=_default_anchor_rows)
    merge_dist: float = 30.0

    def __post_init__(self):
        if self.sdct_window < 4:
            raise ValueError("sdct_window must be at least 4")
        if not 0.0 <= self.edge_threshold <= 1.0:
            raise ValueError("edge_threshold must be within [0, 1]")
        if self.hough_rho_res <= 0 or self.hough_theta_res <= 0:
            raise ValueError("accumulator resolutions must be positive")
        if not self.theta_min < self.theta_max:
            raise ValueError("theta_min must be below theta_max")
        if self.accumulator_min < 1:
            raise ValueError("accumulator_min must be at least 1")
        rows = tuple(float(y) for y in self.anchor_rows)
        if len(rows) < 2 or any(b >= a for a, b in zip(rows, rows[1:])):
            raise ValueError("anchor_rows must be strictly decreasing with at least 2 rows")
        if self.merge_dist < 0:
            raise ValueError("merge_dist must be non-negative")
        object.__setattr__(self, "anchor_rows", rows)

    def merged(self, **overrides) -> "LabelerProfile":
        """New profile with the given fields replaced (validation re-runs)."""
        return dataclasses.replace(self, **overrides)


@dataclass(frozen=True)
class HoughLine:
    """One detected line in normal form rho = x cos(theta) + y sin(theta)."""

    rho: float
    theta: float
    votes: int


def dct_basis(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis matrix B with B[k, i] = a_k cos(pi (2i+1) k / 2n)."""
    k = np.arange(n, dtype=np.float64)[:, None]
    i = np.arange(n, dtype=np.float64)[None, :]
    basis = np.cos(math.pi * (2.0 * i + 1.0) * k / (2.0 * n))
    basis[0, :] *= math.sqrt(1.0 / n)
    basis[1:, :] *= math.sqrt(2.0 / n)
    return basis


def window_dct2(window: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D type-II DCT of one square window."""
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"window must be square, got {w.shape}")
    b = dct_basis(w.shape[0])
    return b @ w @ b.T


def window_edge_energy(window: np.ndarray) -> float:
    """Normalized AC energy of a window: sum(AC^2) / sum(all coefficients^2)."""
    coeffs = window_dct2(window)
    total = float(np.sum(coeffs * coeffs))
    if total <= 0.0:
        return 0.0
    dc = float(coeffs[0, 0])
    return (total - dc * dc) / total


def _window_sums(a: np.ndarray, w: int) -> np.ndarray:
    """Sums of all w-by-w windows of a 2-D array via an integral image, exact for integers."""
    h, wd = a.shape
    integral = np.zeros((h + 1, wd + 1), dtype=np.float64)
    integral[1:, 1:] = a.cumsum(axis=0).cumsum(axis=1)
    return (
        integral[w:, w:]
        - integral[:-w, w:]
        - integral[w:, :-w]
        + integral[:-w, :-w]
    )


def sdct_edge_map(gray: ImageBuffer, window: int, threshold: float) -> BinaryMask:
    """Per-pixel edge decision from the normalized AC energy of the local DCT window.

    Windows are anchored at their top-left pixel with stride 1; pixels within
    window-1 of the right/bottom edges reuse the last full window. By Parseval
    the orthonormal-DCT energy ratio equals 1 - (window mean)^2 * n / (sum of
    squares), which is what is evaluated here; it is bit-for-bit the same
    decision as running the DCT per window.
    """
    if gray.channels != 1:
        raise ValueError("edge map expects a grayscale image")
    w = int(window)
    if w > gray.width or w > gray.height:
        raise ValueError(
            f"window {w} exceeds image dimensions {gray.width}x{gray.height}"
        )
    g = gray.pixels[:, :, 0].astype(np.float64)
    s1 = _window_sums(g, w)
    s2 = _window_sums(g * g, w)
    ac = np.maximum(s2 - (s1 * s1) / (w * w), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        energy = np.where(s2 > 0.0, ac / np.where(s2 > 0.0, s2, 1.0), 0.0)
    full = np.pad(energy, ((0, w - 1), (0, w - 1)), mode="edge")
    return BinaryMask(full >= threshold)


def _theta_bins(p: LabelerProfile) -> tuple[np.ndarray, int]:
    """Both angle branches; returns the bin centers and the first branch's length."""
    step = p.hough_theta_res
    low = np.arange(p.theta_min, p.theta_max + step * 0.5, step)
    high = np.arange(math.pi - p.theta_max, math.pi - p.theta_min + step * 0.5, step)
    return np.concatenate([low, high]), len(low)


def _branch_peaks(acc: np.ndarray, min_votes: int) -> np.ndarray:
    """Cells that are >= all 8 neighbors (3x3) and reach the vote floor."""
    padded = np.pad(acc, 1, mode="constant", constant_values=-1)
    neighborhood = np.full_like(acc, -1)
    h, w = acc.shape
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            shifted = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
            neighborhood = np.maximum(neighborhood, shifted)
    return (acc >= neighborhood) & (acc >= min_votes)


def hough_lines(edges: BinaryMask, p: LabelerProfile) -> list[HoughLine]:
    """Vote edge pixels into a (rho, theta) accumulator, then pick local maxima.

    The angle range is restricted to the two configured branches (lines tilted
    away from vertical on either side). Peaks are sorted by votes descending,
    ties by (rho, theta) ascending.
    """
    ys, xs = np.nonzero(edges.bits)
    if xs.size == 0:
        return []
    thetas, split = _theta_bins(p)
    diag = math.hypot(edges.width - 1, edges.height - 1)
    rho0 = -diag
    n_rho = int(math.ceil(2.0 * diag / p.hough_rho_res)) + 1

    acc = np.zeros((n_rho, thetas.size), dtype=np.int64)
    xf = xs.astype(np.float64)
    yf = ys.astype(np.float64)
    for t, theta in enumerate(thetas):
        rho = xf * math.cos(theta) + yf * math.sin(theta)
        bins = np.round((rho - rho0) / p.hough_rho_res).astype(np.intp)
        acc[:, t] = np.bincount(bins, minlength=n_rho)

    lines: list[HoughLine] = []
    for lo, hi in ((0, split), (split, thetas.size)):
        branch = acc[:, lo:hi]
        if branch.size == 0:
            continue
        peak_mask = _branch_peaks(branch, p.accumulator_min)
        rbins, tbins = np.nonzero(peak_mask)
        for r, t in zip(rbins, tbins):
            lines.append(
                HoughLine(
                    rho=rho0 + float(r) * p.hough_rho_res,
                    theta=float(thetas[lo + t]),
                    votes=int(branch[r, t]),
                )
            )
    lines.sort(key=lambda ln: (-ln.votes, ln.rho, ln.theta))
    return lines


def _sample_anchors(
    line: HoughLine, anchor_rows: tuple[float, ...], frame_w: int
) -> dict[float, float] | None:
    """x positions of a line at the anchor rows; None for near-horizontal lines."""
    cos_t = math.cos(line.theta)
    if abs(cos_t) < HORIZONTAL_COS_EPS:
        return None
    sin_t = math.sin(line.theta)
    xs: dict[float, float] = {}
    for y in anchor_rows:
        x = (line.rho - y * sin_t) / cos_t
        if -ANCHOR_X_MARGIN <= x <= frame_w + ANCHOR_X_MARGIN:
            xs[y] = x
    return xs


def lines_to_lanes(
    lines: list[HoughLine], p: LabelerProfile, frame_w: int, frame_h: int
) -> LabelSet:
    """Turn Hough peaks into at most four CULane polylines.

    Lines close together at their lowest shared anchor merge (higher votes
    win); survivors are cut down to the four nearest the horizontal center.
    """
    if frame_w < 1 or frame_h < 1:
        raise ValueError("frame dimensions must be positive")
    candidates: list[tuple[HoughLine, dict[float, float]]] = []
    for line in sorted(lines, key=lambda ln: (-ln.votes, ln.rho, ln.theta)):
        xs = _sample_anchors(line, p.anchor_rows, frame_w)
        if xs is None or len(xs) < 2:
            continue
        candidates.append((line, xs))

    merged: list[tuple[HoughLine, dict[float, float]]] = []
    for line, xs in candidates:
        absorbed = False
        for _, kept_xs in merged:
            shared = set(xs) & set(kept_xs)
            if not shared:
                continue
            y = max(shared)  # bottom-most shared anchor
            if abs(xs[y] - kept_xs[y]) < p.merge_dist:
                absorbed = True
                break
        if not absorbed:
            merged.append((line, xs))

    center = frame_w / 2.0
    merged.sort(key=lambda item: abs(item[1][max(item[1])] - center))
    survivors = merged[:4]

    lanes = []
    for _, xs in survivors:
        points = tuple(PointF(xs[y], y) for y in p.anchor_rows if y in xs)
        lanes.append(LaneLabel(points))
    return LabelSet(tuple(lanes), frame_w=frame_w, frame_h=frame_h)


@dataclass(frozen=True)
class LabelingArtifacts:
    """Intermediate stage outputs kept for the review UI."""

    gray: ImageBuffer
    edges: BinaryMask
    lines: tuple[HoughLine, ...]
    labels: LabelSet


def label_frame_artifacts(
    img: ImageBuffer, cam: CameraModel | None, p: LabelerProfile
) -> LabelingArtifacts:
    """Full labeling chain, returning intermediates along with the labels."""
    work = undistort_image(img, cam) if cam is not None else img
    work = resize_bilinear(work, DEFAULT_FRAME_W, DEFAULT_FRAME_H)
    gray = to_grayscale(work) if work.channels == 3 else work
    edges = sdct_edge_map(gray, p.sdct_window, p.edge_threshold)
    lines = hough_lines(edges, p)
    labels = lines_to_lanes(lines, p, DEFAULT_FRAME_W, DEFAULT_FRAME_H)
    return LabelingArtifacts(gray=gray, edges=edges, lines=tuple(lines), labels=labels)


def label_frame(img: ImageBuffer, cam: CameraModel | None, p: LabelerProfile) -> LabelSet:
    """Detect lanes on one frame; see :func:`label_frame_artifacts` for intermediates."""
    return label_frame_artifacts(img, cam, p).labels
