"""Projective machinery: homography estimation, point/image warping, lens undistortion.

A homography maps the source image plane to the target plane. It is estimated
from exactly four point correspondences by building the standard 8x8 linear
system (the ninth entry is fixed to 1) and solving it with a partial-pivoting
LU factorization. Image warping uses inverse mapping with bilinear sampling
and black fill where no source data exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, PointAtInfinityError
from .imaging import ImageBuffer, RectROI, bilinear_sample, round_u8
from .labels import LabelSet, LaneLabel, PointF, normalize_points

W_EPSILON = 1e-9
DET_EPSILON = 1e-12
COLLINEARITY_FACTOR = 1e-6
DEFAULT_DROP_MARGIN = 50.0


@dataclass(frozen=True, eq=False)
class Homography:
    """Invertible 3x3 projective transform. Normalized once so m[2][2] == 1."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("homography entries must be finite")
        if abs(m[2, 2]) > DET_EPSILON:
            m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= DET_EPSILON:
            raise DegenerateGeometryError("homography matrix is singular or near-singular")
        m = np.ascontiguousarray(m)
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Homography":
        m = np.eye(3)
        m[0, 2] = dx
        m[1, 2] = dy
        return cls(m)


def _check_no_collinear(pts: tuple[PointF, ...], which: str) -> None:
    arr = np.array(pts, dtype=np.float64)
    diam = max(
        math.hypot(*(arr[i] - arr[j])) for i in range(4) for j in range(i + 1, 4)
    )
    limit = COLLINEARITY_FACTOR * diam * diam
    for i in range(4):
        a, b, c = [arr[j] for j in range(4) if j != i]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(cross) <= limit:
            raise DegenerateGeometryError(
                f"three {which} points are (near-)collinear: {tuple(a)}, {tuple(b)}, {tuple(c)}"
            )


@dataclass(frozen=True)
class QuadCorrespondence:
    """Four source and four destination points, ordered TL, TR, BR, BL."""

    src: tuple[PointF, PointF, PointF, PointF]
    dst: tuple[PointF, PointF, PointF, PointF]

    def __post_init__(self):
        src = tuple(PointF(float(p[0]), float(p[1])) for p in self.src)
        dst = tuple(PointF(float(p[0]), float(p[1])) for p in self.dst)
        if len(src) != 4 or len(dst) != 4:
            raise ValueError("correspondence needs exactly 4 source and 4 destination points")
        for p in (*src, *dst):
            if not (math.isfinite(p.x) and math.isfinite(p.y)):
                raise ValueError(f"correspondence point {p} is not finite")
        _check_no_collinear(src, "source")
        _check_no_collinear(dst, "destination")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics with Brown-Conrady distortion (3 radial + 2 tangential terms)."""

    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")


def estimate_homography(q: QuadCorrespondence) -> Homography:
    """Direct linear transform from exactly four correspondences.

    Each correspondence (x, y) -> (x', y') contributes two rows of the 8x8
    system in the unknowns h11..h32 (h33 = 1):

        h11 x + h12 y + h13 - x'(h31 x + h32 y) = x'
        h21 x + h22 y + h23 - y'(h31 x + h32 y) = y'
    """
    a = np.zeros((8, 8), dtype=np.float64)
    b = np.zeros(8, dtype=np.float64)
    for i, (s, d) in enumerate(zip(q.src, q.dst)):
        a[2 * i] = [s.x, s.y, 1.0, 0.0, 0.0, 0.0, -d.x * s.x, -d.x * s.y]
        a[2 * i + 1] = [0.0, 0.0, 0.0, s.x, s.y, 1.0, -d.y * s.x, -d.y * s.y]
        b[2 * i] = d.x
        b[2 * i + 1] = d.y
    try:
        h = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateGeometryError(f"correspondence system is singular: {exc}") from exc
    if not np.all(np.isfinite(h)):
        raise DegenerateGeometryError("correspondence system produced non-finite solution")
    m = np.append(h, 1.0).reshape(3, 3)
    return Homography(m)


def apply_point(h: Homography, p: PointF) -> PointF:
    """Map one point: (x', y', w') = H (x, y, 1)^T, result (x'/w', y'/w')."""
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"point {p} is not finite")
    m = h.m
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if abs(w) < W_EPSILON:
        raise PointAtInfinityError(f"point {p} maps to infinity (w' = {w:.3e})")
    return PointF(
        (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w,
        (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w,
    )


def invert(h: Homography) -> Homography:
    return Homography(np.linalg.inv(h.m))


def warp_image(img: ImageBuffer, h: Homography, out_w: int, out_h: int) -> ImageBuffer:
    """Inverse-mapped perspective warp with bilinear sampling and black fill."""
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output dimensions must be positive, got {out_w}x{out_h}")
    inv = np.linalg.inv(h.m)
    xs, ys = np.meshgrid(
        np.arange(out_w, dtype=np.float64), np.arange(out_h, dtype=np.float64)
    )
    den = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
    valid = np.abs(den) >= W_EPSILON
    safe = np.where(valid, den, 1.0)
    sx = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / safe
    sy = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / safe
    valid &= (sx >= 0.0) & (sx <= img.width - 1) & (sy >= 0.0) & (sy <= img.height - 1)
    out = bilinear_sample(img.as_float(), sx, sy, valid)
    return ImageBuffer(round_u8(out))


def distort_normalized(cam: CameraModel, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward Brown-Conrady polynomial on normalized coordinates."""
    r2 = u * u + v * v
    radial = 1.0 + cam.k1 * r2 + cam.k2 * r2 * r2 + cam.k3 * r2 * r2 * r2
    ud = u * radial + 2.0 * cam.p1 * u * v + cam.p2 * (r2 + 2.0 * u * u)
    vd = v * radial + cam.p1 * (r2 + 2.0 * v * v) + 2.0 * cam.p2 * u * v
    return ud, vd


def undistort_image(img: ImageBuffer, cam: CameraModel) -> ImageBuffer:
    """Resample so straight scene lines become straight image lines.

    For every output pixel the forward distortion polynomial gives the source
    location in the distorted input; sampling is bilinear, out of bounds is black.
    """
    xs, ys = np.meshgrid(
        np.arange(img.width, dtype=np.float64), np.arange(img.height, dtype=np.float64)
    )
    u = (xs - cam.cx) / cam.fx
    v = (ys - cam.cy) / cam.fy
    ud, vd = distort_normalized(cam, u, v)
    sx = cam.fx * ud + cam.cx
    sy = cam.fy * vd + cam.cy
    valid = (sx >= 0.0) & (sx <= img.width - 1) & (sy >= 0.0) & (sy <= img.height - 1)
    out = bilinear_sample(img.as_float(), sx, sy, valid)
    return ImageBuffer(round_u8(out))


def transform_lane(
    lane: LaneLabel,
    roi: RectROI,
    h: Homography,
    scale_x: float,
    scale_y: float,
    margin: float = DEFAULT_DROP_MARGIN,
) -> LaneLabel | None:
    """Run lane points through the image transform chain: crop offset, warp, rescale.

    Points that warp to infinity are dropped; points landing outside the output
    frame by more than ``margin`` pixels are dropped. Returns None when fewer
    than two points survive. The output frame is the ROI size times the scale.
    """
    out_w = roi.width * scale_x
    out_h = roi.height * scale_y
    kept: list[tuple[float, float]] = []
    for p in lane.points:
        shifted = PointF(p.x - roi.x0, p.y - roi.y0)
        try:
            warped = apply_point(h, shifted)
        except PointAtInfinityError:
            continue
        x = warped.x * scale_x
        y = warped.y * scale_y
        if x < -margin or x > out_w + margin or y < -margin or y > out_h + margin:
            continue
        kept.append((x, y))
    if len(kept) < 2:
        return None
    pts = tuple(normalize_points(kept))
    if len(pts) < 2:
        return None
    return LaneLabel(pts)


def transform_labels(
    labels: LabelSet,
    roi: RectROI,
    h: Homography,
    scale_x: float,
    scale_y: float,
    margin: float = DEFAULT_DROP_MARGIN,
) -> LabelSet:
    """Apply :func:`transform_lane` to every lane; lanes reduced below 2 points vanish."""
    lanes = []
    for lane in labels:
        out = transform_lane(lane, roi, h, scale_x, scale_y, margin)
        if out is not None:
            lanes.append(out)
    return LabelSet(
        tuple(lanes),
        frame_w=int(round(roi.width * scale_x)),
        frame_h=int(round(roi.height * scale_y)),
    )
