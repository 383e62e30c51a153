"""Vehicle-body overlay: composite the target camera's self-occlusion onto frames.

The body crop is blended over the frame through its mask; a small box-blur
feather on the mask edge avoids aliased seams a detector could latch onto.
Label points hidden under the body are pruned so training never rewards
hallucinating markings behind the hood.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imaging import BinaryMask, ImageBuffer, load_image, load_mask, round_u8
from .labels import LabelSet, LaneLabel


@dataclass(frozen=True)
class OverlayAsset:
    """Body crop plus its region mask, both at the pipeline output resolution."""

    body: ImageBuffer
    mask: BinaryMask
    feather_radius: int = 3

    def __post_init__(self):
        if (self.body.width, self.body.height) != (self.mask.width, self.mask.height):
            raise ValueError(
                f"body {self.body.width}x{self.body.height} and mask "
                f"{self.mask.width}x{self.mask.height} dimensions differ"
            )
        if self.feather_radius < 0:
            raise ValueError("feather_radius must be non-negative")


def load_overlay_asset(
    body_path: str | Path, mask_path: str | Path, feather_radius: int = 3
) -> OverlayAsset:
    return OverlayAsset(load_image(body_path), load_mask(mask_path), feather_radius)


def _feather(mask: np.ndarray, radius: int) -> np.ndarray:
    """Box-blur the 0/1 mask, normalizing by the in-bounds window size.

    In-bounds normalization keeps alpha at exactly 1 deep inside a mask that
    touches the frame border (the usual case for a hood at the bottom edge).
    """
    if radius == 0:
        return mask.astype(np.float64)
    h, w = mask.shape
    m = mask.astype(np.float64)
    integral = np.zeros((h + 1, w + 1), dtype=np.float64)
    integral[1:, 1:] = m.cumsum(axis=0).cumsum(axis=1)
    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.maximum(ys - radius, 0)
    y1 = np.minimum(ys + radius, h - 1)
    x0 = np.maximum(xs - radius, 0)
    x1 = np.minimum(xs + radius, w - 1)
    ya, yb = y0[:, None], y1[:, None]
    xa, xb = x0[None, :], x1[None, :]
    total = (
        integral[yb + 1, xb + 1]
        - integral[ya, xb + 1]
        - integral[yb + 1, xa]
        + integral[ya, xa]
    )
    count = (yb - ya + 1) * (xb - xa + 1)
    return total / count


def overlay_blend(base: ImageBuffer, asset: OverlayAsset) -> ImageBuffer:
    """alpha-composite the body over the base through the feathered mask.

    Pixels the feather never reaches stay bit-identical to the base; with
    feather 0 every output pixel is exactly base or exactly body.
    """
    if (base.width, base.height) != (asset.body.width, asset.body.height):
        raise ValueError(
            f"base {base.width}x{base.height} does not match overlay "
            f"{asset.body.width}x{asset.body.height}"
        )
    alpha = _feather(asset.mask.bits, asset.feather_radius)[:, :, np.newaxis]
    base_f = base.as_float()
    body_f = asset.body.as_float()
    if base_f.shape[2] != body_f.shape[2]:
        if base_f.shape[2] == 1:
            base_f = np.repeat(base_f, 3, axis=2)
        if body_f.shape[2] == 1:
            body_f = np.repeat(body_f, 3, axis=2)
    blended = round_u8(alpha * body_f + (1.0 - alpha) * base_f)
    # exact passthrough / replacement where alpha saturates
    base_px = base_f.astype(np.uint8)
    body_px = body_f.astype(np.uint8)
    out = np.where(alpha == 0.0, base_px, np.where(alpha == 1.0, body_px, blended))
    return ImageBuffer(out.astype(np.uint8))


def occlusion_consistency(labels: LabelSet, asset: OverlayAsset) -> LabelSet:
    """Drop label points hidden under the (unfeathered) body mask.

    Surviving points keep their order; lanes reduced below two points are
    removed entirely.
    """
    bits = asset.mask.bits
    h, w = bits.shape
    lanes: list[LaneLabel] = []
    for lane in labels:
        kept = []
        for p in lane.points:
            ix = int(round(p.x))
            iy = int(round(p.y))
            covered = 0 <= ix < w and 0 <= iy < h and bits[iy, ix]
            if not covered:
                kept.append(p)
        if len(kept) >= 2:
            lanes.append(LaneLabel(tuple(kept)))
    return LabelSet(tuple(lanes), frame_w=labels.frame_w, frame_h=labels.frame_h)
