"""Hood removal: deterministic harmonic fill plus an external-backend adapter.

The builtin backend solves the discrete Laplace equation over the masked
region (each masked pixel converges to the mean of its in-bounds 4-neighbors)
by Gauss-Seidel iteration with alternating sweep direction. Unmasked pixels
are never touched, filled values obey the max principle, and the sweep order
is fixed so output is identical across runs and worker counts.

The external backend shells out to any command-line inpainting tool via a
template with {image} {mask} {output} placeholders and validates the result
structurally (dimensions, bounded drift outside the mask).
"""

from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BackendError, ConfigError
from .imaging import BinaryMask, ImageBuffer, load_image, load_mask, round_u8

log = logging.getLogger(__name__)

EXTERNAL_DRIFT_LIMIT = 2.0  # mean absolute difference allowed outside the mask

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


@dataclass(frozen=True)
class DiffusionParams:
    """Stopping rule for the harmonic fill."""

    max_iters: int = 2000
    tol: float = 0.05

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@njit(cache=True)
def _gauss_seidel_sweep(u, ys, xs, h, w, reverse):  # pragma: no cover - jit kernel
    max_delta = 0.0
    n = ys.shape[0]
    for k in range(n):
        i = n - 1 - k if reverse else k
        y = ys[i]
        x = xs[i]
        s = 0.0
        c = 0
        if y > 0:
            s += u[y - 1, x]
            c += 1
        if y < h - 1:
            s += u[y + 1, x]
            c += 1
        if x > 0:
            s += u[y, x - 1]
            c += 1
        if x < w - 1:
            s += u[y, x + 1]
            c += 1
        v = s / c
        d = abs(v - u[y, x])
        if d > max_delta:
            max_delta = d
        u[y, x] = v
    return max_delta


def _boundary_ring(mask: np.ndarray) -> np.ndarray:
    """Unmasked pixels 4-adjacent to the masked region."""
    ring = np.zeros_like(mask)
    ring[:-1, :] |= mask[1:, :]
    ring[1:, :] |= mask[:-1, :]
    ring[:, :-1] |= mask[:, 1:]
    ring[:, 1:] |= mask[:, :-1]
    return ring & ~mask


def diffusion_inpaint(
    img: ImageBuffer, mask: BinaryMask, params: DiffusionParams = DiffusionParams()
) -> ImageBuffer:
    """Fill the masked region harmonically; unmasked pixels stay bit-identical."""
    if not mask.matches(img):
        raise ValueError(
            f"mask {mask.width}x{mask.height} does not match image {img.width}x{img.height}"
        )
    m = mask.bits
    if m.all():
        raise ValueError("mask covers the whole image, no boundary context to fill from")
    if not m.any():
        return img

    ys, xs = np.nonzero(m)  # row-major order fixes the sweep sequence
    ys = ys.astype(np.int64)
    xs = xs.astype(np.int64)
    ring = _boundary_ring(m)

    out = img.pixels.copy()
    for ch in range(img.channels):
        u = img.pixels[:, :, ch].astype(np.float64)
        seed = float(u[ring].mean()) if ring.any() else float(u[~m].mean())
        u[m] = seed
        for sweep in range(params.max_iters):
            delta = _gauss_seidel_sweep(u, ys, xs, img.height, img.width, sweep % 2 == 1)
            if delta < params.tol:
                break
        out[ys, xs, ch] = round_u8(u[ys, xs])
    return ImageBuffer(out)


def external_inpaint(
    img_path: str | Path,
    mask_path: str | Path,
    cmd_template: str,
    timeout: float | None = 600.0,
) -> ImageBuffer:
    """Run an external inpainting command and validate its output structurally.

    The template must contain {image}, {mask}, and {output} placeholders. The
    result must match the input dimensions, and pixels outside the mask may
    drift by at most 2 intensity levels mean absolute difference (catches
    backends that quietly repaint the whole frame).
    """
    img_path = Path(img_path)
    mask_path = Path(mask_path)
    for placeholder in ("{image}", "{mask}", "{output}"):
        if placeholder not in cmd_template:
            raise ValueError(f"command template is missing the {placeholder} placeholder")

    original = load_image(img_path)
    mask = load_mask(mask_path)
    if not mask.matches(original):
        raise BackendError(
            f"mask {mask_path} is {mask.width}x{mask.height}, "
            f"image is {original.width}x{original.height}"
        )

    with tempfile.TemporaryDirectory(prefix="sidelane-inpaint-") as tmp:
        out_path = Path(tmp) / "inpainted.png"
        cmd = cmd_template.format(image=str(img_path), mask=str(mask_path), output=str(out_path))
        argv = shlex.split(cmd)
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        if proc.returncode != 0:
            raise BackendError(
                f"inpaint backend exited with code {proc.returncode}: "
                f"{proc.stderr.strip() or proc.stdout.strip()}"
            )
        if not out_path.is_file():
            raise BackendError(f"inpaint backend produced no output file at {out_path}")
        result = load_image(out_path)

    if (result.width, result.height) != (original.width, original.height):
        raise BackendError(
            f"backend output is {result.width}x{result.height}, "
            f"expected {original.width}x{original.height}"
        )
    outside = ~mask.bits
    if outside.any():
        a = original.as_float()
        b = result.as_float()
        # tolerate gray/RGB promotion either way by comparing in RGB
        if a.shape[2] != b.shape[2]:
            if a.shape[2] == 1:
                a = np.repeat(a, 3, axis=2)
            if b.shape[2] == 1:
                b = np.repeat(b, 3, axis=2)
        drift = float(np.mean(np.abs(a[outside] - b[outside])))
        if drift > EXTERNAL_DRIFT_LIMIT:
            raise BackendError(
                f"backend drifted {drift:.2f} levels MAD outside the mask "
                f"(limit {EXTERNAL_DRIFT_LIMIT})"
            )
    return result


class MaskRegistry:
    """Per-sequence hood masks resolved by longest path-prefix match.

    One manually drawn mask is reused for every frame of a driving sequence;
    frames matching no prefix get no mask and skip inpainting.
    """

    def __init__(self, entries: dict[str, BinaryMask], paths: dict[str, str] | None = None):
        self._entries = dict(entries)
        self._paths = dict(paths or {})
        self._prefixes = sorted(self._entries, key=len, reverse=True)

    def __len__(self) -> int:
        return len(self._entries)

    def _prefix_for(self, rel_path: str) -> str | None:
        for prefix in self._prefixes:
            if rel_path.startswith(prefix):
                return prefix
        return None

    def resolve(self, rel_path: str) -> BinaryMask | None:
        prefix = self._prefix_for(rel_path)
        return self._entries[prefix] if prefix is not None else None

    def resolve_path(self, rel_path: str) -> str | None:
        prefix = self._prefix_for(rel_path)
        return self._paths.get(prefix) if prefix is not None else None

    @classmethod
    def load(
        cls,
        mapping: dict[str, str],
        base_dir: str | Path,
        expected_size: tuple[int, int] | None = None,
    ) -> "MaskRegistry":
        """Load all masks up front; unreadable or wrong-size masks fail here, not mid-run."""
        base_dir = Path(base_dir)
        entries: dict[str, BinaryMask] = {}
        paths: dict[str, str] = {}
        for prefix, mask_rel in mapping.items():
            path = base_dir / mask_rel
            try:
                mask = load_mask(path)
            except OSError as exc:
                raise ConfigError(f"cannot load mask for prefix {prefix!r}: {exc}") from exc
            if expected_size is not None and (mask.width, mask.height) != expected_size:
                raise ConfigError(
                    f"mask {path} is {mask.width}x{mask.height}, "
                    f"pipeline output is {expected_size[0]}x{expected_size[1]}"
                )
            entries[prefix] = mask
            paths[prefix] = str(path)
        return cls(entries, paths)
