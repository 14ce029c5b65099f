"""Differentiable tone-mapped image quality index.

Q combines multi-scale structural fidelity (local signal strengths mapped
through a smooth psychometric CDF plus a cross-correlation term) with
statistical naturalness (global mean and mean block contrast scored
against density priors). Every stage on the score path is smooth, so Q
backpropagates to the LDR pixels; that is what the latent search climbs.

All constants are pinned: changing any of them invalidates the oracle
comparison in the test suite. The LDR input is the pre-quantization [0, 1]
image scaled by 255 (a quantized evaluation flag exists for reporting
parity); HDR luminance is affinely spread over [0, 2^32 - 1] with a
rounded factor first. Local statistics use an 11x11 Gaussian (sigma 1.5)
in 'valid' mode; scales connect by replicate-padded 2x2 mean pooling;
naturalness blocks are non-overlapping 11x11 with sample (ddof 1) stds,
incomplete border blocks dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
from scipy.special import erf as _erf_np

from . import hdrio
from . import tensorgrad as tg
from .errors import DomainError, ShapeError
from .hdrio import HdrImage
from .tensorgrad import Tensor

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class TmqiConfig:
    levels: int = 5
    scale_weights: tuple = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
    csf_freqs: tuple = (16.0, 8.0, 4.0, 2.0, 1.0)
    window_size: int = 11
    window_sigma: float = 1.5
    c1: float = 0.01
    c2: float = 10.0
    nat_mean_mu: float = 115.94
    nat_mean_sigma: float = 27.99
    nat_std_scale: float = 64.29
    nat_beta_a: float = 4.4
    nat_beta_b: float = 10.1
    a: float = 0.8012
    s_exp: float = 0.3046
    n_exp: float = 0.7088

    def weights(self) -> np.ndarray:
        w = np.asarray(self.scale_weights[:self.levels], dtype=np.float64)
        return w / w.sum()

    def min_size(self) -> int:
        return self.window_size * 2 ** (self.levels - 1)

    def with_levels(self, levels: int) -> "TmqiConfig":
        if not (1 <= levels <= len(self.scale_weights)):
            raise DomainError("levels=%d outside [1, %d]"
                              % (levels, len(self.scale_weights)))
        return replace(self, levels=levels)

    def for_size(self, h: int, w: int) -> "TmqiConfig":
        """Largest feasible level count for an image of this size."""
        short = min(h, w)
        levels = 0
        while levels < len(self.scale_weights) \
                and short >= self.window_size * 2 ** levels:
            levels += 1
        if levels == 0:
            raise DomainError(
                "image %dx%d smaller than the %dx%d analysis window"
                % (h, w, self.window_size, self.window_size))
        return self.with_levels(min(levels, 5))


@dataclass
class TmqiScore:
    q: float
    s: float
    n: float


DEFAULT_CONFIG = TmqiConfig()


def _gaussian_window(cfg: TmqiConfig) -> np.ndarray:
    size, sigma = cfg.window_size, cfg.window_sigma
    half = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    g = np.exp(-((yy - half) ** 2 + (xx - half) ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _downsample2_np(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    if h % 2 or w % 2:
        img = np.pad(img, ((0, h % 2), (0, w % 2)), mode="edge")
    return img.reshape(img.shape[0] // 2, 2, img.shape[1] // 2, 2).mean(
        axis=(1, 3))


def _phi_np(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + _erf_np(x / _SQRT2))


def _phi_t(x: Tensor) -> Tensor:
    return (tg.erf(x * (1.0 / _SQRT2)) + 1.0) * 0.5


def _conv_valid(x: Tensor, win: Tensor) -> Tensor:
    return tg.conv2d(x, win, padding="valid")


def scale_hdr_luminance(hdr_lum: np.ndarray) -> np.ndarray:
    """Affine spread over [0, 2^32 - 1] with a rounded scale factor."""
    lmin, lmax = float(hdr_lum.min()), float(hdr_lum.max())
    if lmax - lmin <= 0:
        raise DomainError("constant hdr luminance has no structure to score")
    factor = np.round((2.0 ** 32 - 1.0) / (lmax - lmin))
    return factor * (hdr_lum - lmin)


def structural_fidelity(hdr_lum_scaled: np.ndarray, ldr_lum: Tensor,
                        cfg: TmqiConfig = DEFAULT_CONFIG) -> Tensor:
    """Multi-scale fidelity; hdr side is constant, ldr side differentiable.

    hdr_lum_scaled: (H, W) float64, already spread over [0, 2^32 - 1].
    ldr_lum: (1, 1, H, W) tensor in [0, 255] scale.
    """
    h, w = hdr_lum_scaled.shape
    if ldr_lum.shape != (1, 1, h, w):
        raise ShapeError("structural_fidelity: ldr %s does not match hdr "
                         "(1, 1, %d, %d)" % (ldr_lum.shape, h, w))
    if min(h, w) < cfg.min_size():
        raise DomainError(
            "image %dx%d too small for %d fidelity levels; needs at least "
            "%dx%d" % (h, w, cfg.levels, cfg.min_size(), cfg.min_size()))
    dtype = ldr_lum.dtype
    win_np = _gaussian_window(cfg)
    win = tg.constant(win_np[None, None], dtype=dtype)
    weights = cfg.weights()
    x1 = hdr_lum_scaled.astype(np.float64)
    x2 = ldr_lum
    s_total: Optional[Tensor] = None
    for lev in range(cfg.levels):
        f = cfg.csf_freqs[lev]
        csf = 100.0 * 2.6 * (0.0192 + 0.114 * f) * math.exp(
            -((0.114 * f) ** 1.1))
        u = 128.0 / (1.4 * csf)
        sig = u / 3.0
        # hdr-side constants
        mu1 = _np_conv_valid(x1, win_np)
        v1 = _np_conv_valid(x1 * x1, win_np) - mu1 * mu1
        s1 = np.sqrt(np.maximum(v1, 0.0))
        s1p = _phi_np((s1 - u) / sig)
        # ldr-side tensors
        mu2 = _conv_valid(x2, win)
        v2 = _conv_valid(x2 * x2, win) - mu2 * mu2
        s2 = tg.sqrt(tg.max_scalar(v2, 0.0) + 1e-12)
        s2p = _phi_t((s2 - u) * (1.0 / sig))
        x1_t = tg.constant(x1[None, None].astype(np.float64), dtype=dtype)
        cov = _conv_valid(x1_t * x2, win) - tg.constant(
            mu1[None, None], dtype=dtype) * mu2
        s1p_t = tg.constant(s1p[None, None], dtype=dtype)
        s1_t = tg.constant(s1[None, None], dtype=dtype)
        smap = ((s1p_t * s2p * 2.0 + cfg.c1)
                / (s1p_t * s1p_t + s2p * s2p + cfg.c1)) \
            * ((cov + cfg.c2) / (s1_t * s2 + cfg.c2))
        # the mean can be <= 0 on adversarial inputs; floor it so the
        # weighted geometric combination stays in domain
        s_lev = tg.max_scalar(smap.mean(), 1e-8)
        term = tg.pow_(s_lev, float(weights[lev]))
        s_total = term if s_total is None else s_total * term
        if lev < cfg.levels - 1:
            x1 = _downsample2_np(x1)
            x2 = tg.avgpool2x2(x2)
    return s_total


def _np_conv_valid(x: np.ndarray, win: np.ndarray) -> np.ndarray:
    """Valid-mode correlation via the same im2col path as the tensor op."""
    kh, kw = win.shape
    view = np.lib.stride_tricks.sliding_window_view(x, (kh, kw))
    return view.reshape(view.shape[0], view.shape[1], -1) @ win.reshape(-1)


def statistical_naturalness(ldr_lum: Tensor,
                            cfg: TmqiConfig = DEFAULT_CONFIG) -> Tensor:
    """Density score of global mean and mean block contrast, in [0, 1]."""
    if ldr_lum.ndim != 4 or ldr_lum.shape[:2] != (1, 1):
        raise ShapeError("statistical_naturalness expects (1, 1, H, W), "
                         "got %s" % (ldr_lum.shape,))
    _, _, h, w = ldr_lum.shape
    bs = cfg.window_size
    nbh, nbw = h // bs, w // bs
    if nbh == 0 or nbw == 0:
        raise DomainError("image %dx%d smaller than one %dx%d block"
                          % (h, w, bs, bs))
    u = ldr_lum.mean()
    blocks = ldr_lum[:, :, :nbh * bs, :nbw * bs].reshape(
        (nbh, bs, nbw, bs))
    m = blocks.mean(axis=(1, 3))
    m2 = (blocks * blocks).mean(axis=(1, 3))
    nb = bs * bs
    var = (m2 - m * m) * (nb / (nb - 1.0))
    stds = tg.sqrt(tg.max_scalar(var, 0.0) + 1e-12)
    sig = stds.mean()
    pb = tg.exp((u - cfg.nat_mean_mu) * (u - cfg.nat_mean_mu)
                * (-0.5 / cfg.nat_mean_sigma ** 2))
    mode = (cfg.nat_beta_a - 1.0) / (cfg.nat_beta_a + cfg.nat_beta_b - 2.0)
    x = sig * (1.0 / cfg.nat_std_scale)
    x = tg.clamp(x, 1e-12, 1.0 - 1e-12)
    pc = tg.pow_(x * (1.0 / mode), cfg.nat_beta_a - 1.0) \
        * tg.pow_((1.0 - x) * (1.0 / (1.0 - mode)), cfg.nat_beta_b - 1.0)
    return pb * pc


def _ldr_lum_tensor(ldr: Tensor) -> Tensor:
    """(1, 3, H, W) [0, 1] -> (1, 1, H, W) luminance in [0, 255] scale."""
    r = ldr[:, 0:1]
    g = ldr[:, 1:2]
    b = ldr[:, 2:3]
    return (r * hdrio.LUMA_R + g * hdrio.LUMA_G + b * hdrio.LUMA_B) * 255.0


def tmqi_tensor(hdr_lum: np.ndarray, ldr: Tensor,
                cfg: TmqiConfig = DEFAULT_CONFIG):
    """Differentiable (q, s, n) for an LDR tensor against fixed HDR luminance.

    hdr_lum: (H, W) linear luminance (unscaled); ldr: (1, 3, H, W) in the
    pre-quantization [0, 1] scale (values slightly outside are tolerated;
    no clamp sits on the score path).
    """
    hdr_scaled = scale_hdr_luminance(np.asarray(hdr_lum, dtype=np.float64))
    ldr_lum = _ldr_lum_tensor(ldr)
    s = structural_fidelity(hdr_scaled, ldr_lum, cfg)
    n = statistical_naturalness(ldr_lum, cfg)
    q = tg.pow_(s, cfg.s_exp) * cfg.a + tg.pow_(n, cfg.n_exp) * (1.0 - cfg.a)
    return q, s, n


def tmqi(hdr: Union[HdrImage, np.ndarray], ldr: np.ndarray,
         cfg: TmqiConfig = DEFAULT_CONFIG, quantized: bool = False) -> TmqiScore:
    """Score an LDR rendering of an HDR image.

    hdr: HdrImage or (H, W, 3) linear radiance; ldr: (H, W, 3) in [0, 1].
    quantized=True scores the 8-bit-quantized image instead (evaluation
    parity with file-based scoring; not differentiable).
    """
    hdr_rgb = hdr.data if isinstance(hdr, HdrImage) else np.asarray(hdr)
    ldr = np.asarray(ldr, dtype=np.float64)
    if hdr_rgb.ndim != 3 or hdr_rgb.shape[2] != 3 or ldr.shape != hdr_rgb.shape:
        raise ShapeError("tmqi: hdr %s vs ldr %s must both be (H, W, 3)"
                         % (hdr_rgb.shape, ldr.shape))
    if quantized:
        ldr = hdrio.quantize8(ldr).astype(np.float64) / 255.0
    hdr_lum = hdrio.luminance(hdr_rgb.astype(np.float64))
    with tg.no_grad():
        ldr_t = tg.constant(ldr.transpose(2, 0, 1)[None], dtype=np.float64)
        q, s, n = tmqi_tensor(hdr_lum, ldr_t, cfg)
    return TmqiScore(q=q.item(), s=s.item(), n=n.item())


def tmqi_grad(hdr: Union[HdrImage, np.ndarray], ldr: np.ndarray,
              cfg: TmqiConfig = DEFAULT_CONFIG):
    """Gradient of q with respect to the LDR pixels.

    Returns (score: TmqiScore, grad: (H, W, 3) float64).
    """
    hdr_rgb = hdr.data if isinstance(hdr, HdrImage) else np.asarray(hdr)
    ldr = np.asarray(ldr, dtype=np.float64)
    if ldr.shape != hdr_rgb.shape:
        raise ShapeError("tmqi_grad: hdr %s vs ldr %s"
                         % (hdr_rgb.shape, ldr.shape))
    hdr_lum = hdrio.luminance(hdr_rgb.astype(np.float64))
    ldr_t = tg.parameter(ldr.transpose(2, 0, 1)[None], dtype=np.float64)
    q, s, n = tmqi_tensor(hdr_lum, ldr_t, cfg)
    q.backward()
    grad = ldr_t.grad[0].transpose(1, 2, 0).copy()
    return TmqiScore(q=q.item(), s=s.item(), n=n.item()), grad
