"""8-bit raster primitives: image buffers, binary masks, crop/resize/grayscale, file I/O.

All image content in the toolkit flows through :class:`ImageBuffer` (uint8,
1 or 3 channels, RGB order) and :class:`BinaryMask`. Both are immutable after
construction; every operation here is a pure function, so frames can be
processed on separate workers without shared state.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

# ITU-R BT.601 luma weights
LUMA_R, LUMA_G, LUMA_B = 0.299, 0.587, 0.114

MASK_THRESHOLD = 128


def round_u8(values: np.ndarray) -> np.ndarray:
    """Half-up rounding to uint8; the single quantization convention used everywhere."""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) + 0.5), 0.0, 255.0).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Immutable uint8 image, stored as (height, width, channels) with channels 1 or 3."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, np.newaxis]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w) or (h, w, 1|3) pixel array, got shape {px.shape}")
        if px.dtype != np.uint8:
            raise ValueError(f"expected uint8 samples, got {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image dimensions must be at least 1x1")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def as_float(self) -> np.ndarray:
        """Writable float64 copy, shape (h, w, c)."""
        return self.pixels.astype(np.float64)

    def same_pixels(self, other: "ImageBuffer") -> bool:
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean raster; True marks the region of interest (inpaint target or overlay area)."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {b.shape}")
        if b.dtype != np.bool_:
            b = b.astype(bool)
        b = np.ascontiguousarray(b)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def true_count(self) -> int:
        return int(np.count_nonzero(self.bits))

    @classmethod
    def from_image(cls, img: ImageBuffer) -> "BinaryMask":
        """Threshold a raster: value >= 128 is True. 3-channel input goes through luma first."""
        gray = img if img.channels == 1 else to_grayscale(img)
        return cls(gray.pixels[:, :, 0] >= MASK_THRESHOLD)

    def to_image(self) -> ImageBuffer:
        return ImageBuffer(np.where(self.bits, 255, 0).astype(np.uint8))

    def matches(self, img: ImageBuffer) -> bool:
        return self.height == img.height and self.width == img.width


@dataclass(frozen=True)
class RectROI:
    """Axis-aligned crop rectangle, top-left inclusive."""

    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"ROI must be at least 1x1, got {self.width}x{self.height}")
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"ROI origin must be non-negative, got ({self.x0}, {self.y0})")


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """BT.601 luma: round(0.299 R + 0.587 G + 0.114 B), clamped to [0, 255]."""
    if img.channels != 3:
        raise ValueError(f"to_grayscale needs a 3-channel image, got {img.channels} channel(s)")
    f = img.as_float()
    luma = LUMA_R * f[:, :, 0] + LUMA_G * f[:, :, 1] + LUMA_B * f[:, :, 2]
    return ImageBuffer(round_u8(luma))


def gray_to_rgb(img: ImageBuffer) -> ImageBuffer:
    """Replicate a single channel into RGB."""
    if img.channels != 1:
        raise ValueError(f"gray_to_rgb needs a 1-channel image, got {img.channels}")
    return ImageBuffer(np.repeat(img.pixels, 3, axis=2))


def crop(img: ImageBuffer, roi: RectROI) -> ImageBuffer:
    """Extract the ROI; output(x, y) = img(roi.x0 + x, roi.y0 + y)."""
    if roi.x0 + roi.width > img.width:
        raise ValueError(
            f"ROI right edge {roi.x0 + roi.width} exceeds image width {img.width}"
        )
    if roi.y0 + roi.height > img.height:
        raise ValueError(
            f"ROI bottom edge {roi.y0 + roi.height} exceeds image height {img.height}"
        )
    block = img.pixels[roi.y0 : roi.y0 + roi.height, roi.x0 : roi.x0 + roi.width]
    return ImageBuffer(np.ascontiguousarray(block))


def _axis_coords(out_n: int, src_n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # pixel-center alignment: src = (i + 0.5) * src/out - 0.5, clamped
    s = (np.arange(out_n, dtype=np.float64) + 0.5) * (src_n / out_n) - 0.5
    s = np.clip(s, 0.0, src_n - 1)
    i0 = np.floor(s).astype(np.intp)
    i1 = np.minimum(i0 + 1, src_n - 1)
    return i0, i1, s - i0


def resize_bilinear(img: ImageBuffer, out_w: int, out_h: int) -> ImageBuffer:
    """Bilinear resize with pixel-center alignment."""
    if out_w < 1 or out_h < 1:
        raise ValueError(f"target dimensions must be positive, got {out_w}x{out_h}")
    x0, x1, fx = _axis_coords(out_w, img.width)
    y0, y1, fy = _axis_coords(out_h, img.height)
    f = img.as_float()
    fx = fx[np.newaxis, :, np.newaxis]
    fy = fy[:, np.newaxis, np.newaxis]
    top = (1.0 - fx) * f[y0][:, x0] + fx * f[y0][:, x1]
    bot = (1.0 - fx) * f[y1][:, x0] + fx * f[y1][:, x1]
    return ImageBuffer(round_u8((1.0 - fy) * top + fy * bot))


def bilinear_sample(
    source: np.ndarray, sx: np.ndarray, sy: np.ndarray, valid: np.ndarray
) -> np.ndarray:
    """Sample float64 source (h, w, c) at sub-pixel positions; invalid positions yield 0.

    Positions are valid only when fully interpolable (0 <= sx <= w-1, same for y);
    the caller is expected to have folded that into ``valid`` already.
    """
    h, w = source.shape[:2]
    sxc = np.clip(sx, 0.0, w - 1)
    syc = np.clip(sy, 0.0, h - 1)
    x0 = np.floor(sxc).astype(np.intp)
    y0 = np.floor(syc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sxc - x0)[..., np.newaxis]
    fy = (syc - y0)[..., np.newaxis]
    top = (1.0 - fx) * source[y0, x0] + fx * source[y0, x1]
    bot = (1.0 - fx) * source[y1, x0] + fx * source[y1, x1]
    out = (1.0 - fy) * top + fy * bot
    out[~valid] = 0.0
    return out


def load_image(path: str | Path) -> ImageBuffer:
    """Load PNG or JPEG. Grayscale files come back 1-channel, everything else RGB."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode in ("1", "L", "I;16", "I"):
                arr = np.asarray(im.convert("L"), dtype=np.uint8)
            elif im.mode == "LA":
                arr = np.asarray(im.convert("L"), dtype=np.uint8)
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    return ImageBuffer(arr)


def save_image(img: ImageBuffer, path: str | Path) -> None:
    """Write PNG (lossless) or JPEG, inferred from the extension."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in (".png", ".jpg", ".jpeg"):
        raise OSError(f"unsupported image extension {suffix!r} for {path}")
    arr = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
    pil = Image.fromarray(arr)
    try:
        if suffix == ".png":
            pil.save(path, format="PNG")
        else:
            pil.save(path, format="JPEG", quality=95)
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc


def load_mask(path: str | Path) -> BinaryMask:
    return BinaryMask.from_image(load_image(path))


def save_mask(mask: BinaryMask, path: str | Path) -> None:
    save_image(mask.to_image(), path)
