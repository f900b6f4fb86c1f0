"""Continuous realism control.

Maps a realism scale in [0, 1] to a low-pass size, applies the low-pass
filter (antialiased linear resize down to that size and back), and swaps
the low-frequency band of a latent for that of a noised reference image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import torch

from .images import check_same_shape
from .schedule import NoiseSchedule, q_sample

DEFAULT_DIVISOR = 8.0
OBJECT_LEVEL_OFFSET = 0
SCENE_LEVEL_OFFSET = 16


@dataclass(frozen=True)
class RealismConfig:
    """Realism scale plus the affine parameters that turn it into a size.

    divisor 8 is the tuned default; divisor 1 gives the full-consistency
    regime where s_realism = 0 passes the reference through unchanged.
    offset 0 suits object-level content, 16 scene-level.
    """

    s_realism: float
    divisor: float = DEFAULT_DIVISOR
    offset: int = OBJECT_LEVEL_OFFSET

    def __post_init__(self) -> None:
        if not 0.0 <= self.s_realism <= 1.0:
            raise ValueError(f"s_realism must be in [0, 1], got {self.s_realism}")
        if not self.divisor > 0:
            raise ValueError(f"divisor must be positive, got {self.divisor}")
        if self.offset < 0:
            raise ValueError(f"offset must be >= 0, got {self.offset}")

    def size_for(self, image_size: int) -> int:
        return lowpass_size(self.s_realism, image_size, self.divisor, self.offset)


def lowpass_size(
    s_realism: float,
    image_size: int,
    divisor: float = DEFAULT_DIVISOR,
    offset: int = OBJECT_LEVEL_OFFSET,
) -> int:
    """Affine map from realism scale to the transformed size.

    -s * (m/d - 1) + m/d + k, rounded half-up and clamped to [1, m]. Higher
    realism passes less of the reference through the filter.
    """
    if not 0.0 <= s_realism <= 1.0:
        raise ValueError(f"s_realism must be in [0, 1], got {s_realism}")
    if image_size < 2:
        raise ValueError(f"image_size must be >= 2, got {image_size}")
    if divisor > image_size:
        # with m/d < 1 the affine map's slope flips sign and the size would
        # grow with the realism scale
        raise ValueError(f"divisor {divisor} must not exceed image_size {image_size}")
    base = image_size / divisor
    raw = -s_realism * (base - 1.0) + base + offset
    return int(min(max(math.floor(raw + 0.5), 1), image_size))


def _fold_index(i: int, n: int) -> int:
    """Symmetric boundary reflection: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ..."""
    while i < 0 or i >= n:
        if i < 0:
            i = -1 - i
        else:
            i = 2 * n - 1 - i
    return i


def _resize_matrix(n_in: int, n_out: int) -> torch.Tensor:
    """Dense (n_out, n_in) matrix for 1-D antialiased linear resize.

    The triangle kernel's support is widened by the scale factor when
    downsampling; out-of-range taps are folded back symmetrically and each
    row is normalized so constants are preserved exactly.
    """
    scale = n_out / n_in
    support = max(1.0, 1.0 / scale)
    weights = torch.zeros(n_out, n_in, dtype=torch.float64)
    for j in range(n_out):
        center = (j + 0.5) / scale - 0.5
        lo = math.floor(center - support)
        hi = math.ceil(center + support)
        for i in range(lo, hi + 1):
            w = max(0.0, 1.0 - abs(i - center) / support)
            if w > 0.0:
                weights[j, _fold_index(i, n_in)] += w
        weights[j] /= weights[j].sum()
    return weights


@lru_cache(maxsize=64)
def _lowpass_matrix(size: int, n: int, dtype: torch.dtype) -> torch.Tensor:
    """Combined down-then-up operator along one axis, cached per (size, N).

    The downsample is the least-squares one associated with the bilinear
    upsample (its rows are still scale-widened averaging kernels), which
    makes the composite an exact projection: applying the low-pass twice
    equals applying it once up to float rounding.
    """
    up = _resize_matrix(n, size)
    down = torch.linalg.solve(up.T @ up, up.T)
    return (up @ down).to(dtype)


def lowpass(x: torch.Tensor, n: int) -> torch.Tensor:
    """Per-channel resize to n x n and back to the original size.

    n = size is an exact identity; n = 1 replaces every pixel with the
    channel mean (the folded triangle weights are uniform there).
    """
    if x.ndim != 3:
        raise ValueError(f"expected (C, H, W) tensor, got shape {tuple(x.shape)}")
    _, h, w = x.shape
    if not 1 <= n <= min(h, w):
        raise ValueError(f"lowpass size {n} out of range [1, {min(h, w)}]")
    op_h = _lowpass_matrix(h, n, x.dtype)
    op_w = _lowpass_matrix(w, n, x.dtype)
    return torch.einsum("ij,cjk,lk->cil", op_h, x, op_w)


def ilvr_refine(
    x_tilde: torch.Tensor,
    reference: torch.Tensor,
    t: int,
    n: int,
    sched: NoiseSchedule,
    noise: torch.Tensor,
) -> torch.Tensor:
    """Swap the low-frequency band of x_tilde for that of the noised reference.

    The reference is noised to level t - 1 (the clean image at t = 1, where
    the supplied noise is ignored). Written as x + (LP(ref) - LP(x)) so the
    high-frequency band of x survives bit-exactly when the two low-pass
    terms coincide.
    """
    check_same_shape(x_tilde, reference, "x_tilde and reference")
    check_same_shape(x_tilde, noise, "x_tilde and noise")
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    ref_t = reference if t == 1 else q_sample(reference, t - 1, noise, sched)
    return x_tilde + (lowpass(ref_t, n) - lowpass(x_tilde, n))
