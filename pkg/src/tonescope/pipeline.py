"""Differentiable tone mapping: decomposition, compression, reinsertion.

The normalized log-luminance L is filtered by per-pixel convex kernels
into a base layer; the residual is the detail layer. Base is compressed
with a power curve, detail boosted with a saturating arctan curve, and the
reconstruction is contrast-shaped around its mean. Color returns through
per-channel radiance ratios. Everything except the final clamp is
differentiable, including the two gamma parameters.

Numerical notes: base + detail reconstructs L exactly up to IEEE rounding
of the subtraction (bitwise for grid-aligned data); kernel tap reductions
run in ascending-tap sequential order so straight-line references can be
matched pixel-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import hdrio
from . import tensorgrad as tg
from .errors import RangeError, ShapeError
from .hdrio import LogLuminance
from .tensorgrad import Tensor

KERNEL_SIZE = 7
KERNEL_EPS = 1e-8
DETAIL_ALPHA = 3.5
COLOR_BETA = 0.6
GAMMA_BASE_RANGE = (0.8, 2.8)
GAMMA_POST_RANGE = (1.7, 3.7)

Scalar = Union[float, Tensor]


@dataclass
class TonemapResult:
    ldr: np.ndarray            # (H, W, 3) clamped to [0, 1]
    ldr_unclamped: Tensor      # (1, 3, H, W), pre-clamp, for training
    post: Tensor               # (1, 1, H, W) tone-mapped luminance
    base: Tensor
    detail: Tensor
    kernels: Tensor            # normalized (1, K*K, H, W)
    log_lum: LogLuminance
    gamma_base: float
    gamma_post: float


def _scalar_value(v: Scalar) -> float:
    return v.item() if isinstance(v, Tensor) else float(v)


def check_gamma(name: str, value: Scalar, lo: float, hi: float) -> None:
    x = _scalar_value(value)
    if not (lo <= x <= hi):
        raise RangeError("%s=%g outside [%g, %g]" % (name, x, lo, hi))


normalize_kernels = tg.normalize_kernels


def apply_kernels(log_lum: Tensor, kernels: Tensor) -> Tensor:
    """Per-pixel convex filtering of (N, 1, H, W) by (N, K*K, H, W)."""
    return tg.kpn_apply(log_lum, kernels)


def decompose(log_lum: Tensor, kernels: Tensor) -> tuple[Tensor, Tensor]:
    """Split L into (base, detail) with detail = L - base.

    kernels must already be normalized (see normalize_kernels); base is
    then a per-pixel convex combination of the local neighborhood.
    """
    base = apply_kernels(log_lum, kernels)
    detail = log_lum - base
    return base, detail


def compress_base(base: Tensor, gamma_base: Scalar) -> Tensor:
    return tg.pow_(base, gamma_base)


def enhance_detail(detail: Tensor, alpha: Scalar = DETAIL_ALPHA) -> Tensor:
    """Saturating odd curve arctan(alpha x) / arctan(alpha).

    Fixes E(0) = 0 and E(+-1) = +-1 while boosting small magnitudes.
    """
    if isinstance(alpha, Tensor):
        return tg.arctan(detail * alpha) / tg.arctan(alpha)
    a = float(alpha)
    if a <= 0:
        raise RangeError("enhance_detail: alpha=%g must be positive" % a)
    return tg.arctan(detail * a) / float(np.arctan(a))


def post_process(rec: Tensor, gamma_post: Scalar) -> Tensor:
    """Contrast shaping around the spatial mean: E(rec - mu) + mu.

    Single image only (N = 1); the mean is the scalar spatial mean, so a
    constant image is a fixed point.
    """
    if rec.ndim != 4 or rec.shape[0] != 1:
        raise ShapeError("post_process expects (1, 1, H, W), got %s"
                         % (rec.shape,))
    mu = rec.mean()
    return enhance_detail(rec - mu, gamma_post) + mu


def color_correct(hdr_rgb: np.ndarray, lum_floored: np.ndarray, post: Tensor,
                  beta: float = COLOR_BETA) -> tuple[Tensor, np.ndarray]:
    """Reinsert color: ((hdr_c / lum) ** beta) * post per channel.

    Returns (unclamped (1, 3, H, W) tensor, clamped (H, W, 3) ndarray).
    The clamp to [0, 1] happens only here, on the returned array; training
    consumes the unclamped tensor.
    """
    if not (0 < beta <= 1):
        raise RangeError("color_correct: beta=%g outside (0, 1]" % beta)
    ratio = (hdr_rgb / lum_floored[..., None]) ** beta
    ratio_t = tg.constant(ratio.transpose(2, 0, 1)[None], dtype=post.dtype)
    post3 = tg.concat([post, post, post], axis=1)
    un = ratio_t * post3
    clamped = np.clip(un.data[0].transpose(1, 2, 0), 0.0, 1.0)
    return un, clamped


def tonemap_with_kernels(hdr_rgb: np.ndarray, raw_kernels: Tensor,
                         gamma_base: Scalar, gamma_post: Scalar,
                         alpha: Scalar = DETAIL_ALPHA,
                         beta: float = COLOR_BETA,
                         kernels_normalized: bool = False,
                         log_bounds: Optional[tuple] = None) -> TonemapResult:
    """Full pipeline from linear radiance and predicted kernel taps."""
    hdr_rgb = np.asarray(hdr_rgb)
    if hdr_rgb.ndim != 3 or hdr_rgb.shape[2] != 3:
        raise ShapeError("tonemap expects (H, W, 3) radiance, got %s"
                         % (hdr_rgb.shape,))
    check_gamma("gamma_base", gamma_base, *GAMMA_BASE_RANGE)
    check_gamma("gamma_post", gamma_post, *GAMMA_POST_RANGE)
    dtype = raw_kernels.dtype
    y = hdrio.luminance(hdr_rgb)
    yf = hdrio.floor_luminance(y)
    log_lum = hdrio.log_normalize(y, bounds=log_bounds)
    lum_t = tg.constant(log_lum.data[None, None], dtype=dtype)
    kernels = raw_kernels if kernels_normalized \
        else normalize_kernels(raw_kernels, KERNEL_EPS)
    base, detail = decompose(lum_t, kernels)
    rec = compress_base(base, gamma_base) + enhance_detail(detail, alpha)
    post = post_process(rec, gamma_post)
    if yf is None:  # all-black input: ratios are undefined, output black
        un = tg.concat([post * 0.0] * 3, axis=1)
        clamped = np.zeros_like(hdr_rgb, dtype=np.float64)
    else:
        un, clamped = color_correct(hdr_rgb.astype(dtype, copy=False),
                                    yf.astype(dtype, copy=False), post, beta)
    return TonemapResult(
        ldr=clamped, ldr_unclamped=un, post=post, base=base, detail=detail,
        kernels=kernels, log_lum=log_lum,
        gamma_base=_scalar_value(gamma_base),
        gamma_post=_scalar_value(gamma_post))


def gaussian_kernels(h: int, w: int, sigma: float = 2.0, k: int = KERNEL_SIZE,
                     dtype=np.float64) -> Tensor:
    """Spatially uniform Gaussian taps (1, K*K, H, W); classical fallback
    when no trained weights are available."""
    half = k // 2
    yy, xx = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    g = np.exp(-(yy ** 2 + xx ** 2) / (2.0 * sigma ** 2))
    taps = np.broadcast_to(g.reshape(k * k, 1, 1), (k * k, h, w))
    return tg.constant(np.ascontiguousarray(taps)[None], dtype=dtype)
