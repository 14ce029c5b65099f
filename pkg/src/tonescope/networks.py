"""Network components of the tone mapper.

EdgePreservingNet predicts per-pixel filter taps for the base/detail
decomposition (a small U-Net on normalized log-luminance plus a tiled
latent code, softplus head so taps are nonnegative). ToneCompressingNet
predicts the two gamma parameters, squashed into their valid ranges.
LatentEncoder maps an LDR image to a posterior over the latent code.
Discriminator scores overlapping patches of an LDR image.

All weights are Xavier-uniform initialized from a seeded generator, stored
float32, and serialized through the flat weight container together with a
text manifest describing the architecture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from . import pipeline
from . import tensorgrad as tg
from .errors import FormatError, ShapeError
from .tensorgrad import Tensor

LRELU_SLOPE = 0.2


def _lrelu(x: Tensor) -> Tensor:
    return tg.relu_leaky(x, LRELU_SLOPE)


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int,
                   fan_out: int, dtype=np.float32) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Module:
    """Named-parameter container with nested submodules."""

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self._mods: Dict[str, "Module"] = {}

    def add_param(self, name: str, arr: np.ndarray) -> Tensor:
        t = tg.parameter(arr, name=name, dtype=arr.dtype)
        self._params[name] = t
        return t

    def add_module(self, name: str, mod: "Module") -> "Module":
        self._mods[name] = mod
        return mod

    def params(self, prefix: str = "") -> Dict[str, Tensor]:
        out: Dict[str, Tensor] = {}
        for k, v in self._params.items():
            out[prefix + k] = v
        for mk, m in self._mods.items():
            out.update(m.params(prefix + mk + "."))
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.params().values())

    def load_arrays(self, arrays: Dict[str, np.ndarray], prefix: str = "") -> None:
        mine = self.params()
        for name, p in mine.items():
            key = prefix + name
            if key not in arrays:
                raise FormatError("missing weight %r" % key)
            a = np.asarray(arrays[key])
            if a.shape != p.data.shape:
                raise FormatError("weight %r has shape %s, expected %s"
                                  % (key, a.shape, p.data.shape))
            if not np.all(np.isfinite(a)):
                raise FormatError("weight %r has non-finite values" % key)
            p.data = np.ascontiguousarray(a, dtype=p.data.dtype)


class Conv2d(Module):
    def __init__(self, rng, ci: int, co: int, k: int = 3, stride: int = 1,
                 padding: str = "same", bias: bool = True):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.w = self.add_param(
            "w", xavier_uniform(rng, (co, ci, k, k), ci * k * k, co * k * k))
        self.b = self.add_param("b", np.zeros(co, dtype=np.float32)) \
            if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return tg.conv2d(x, self.w, self.b, stride=self.stride,
                         padding=self.padding)


class Linear(Module):
    def __init__(self, rng, fi: int, fo: int, bias: bool = True):
        super().__init__()
        self.w = self.add_param("w", xavier_uniform(rng, (fi, fo), fi, fo))
        self.b = self.add_param("b", np.zeros(fo, dtype=np.float32)) \
            if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return tg.linear(x, self.w, self.b)


@dataclass
class ModelConfig:
    d_z: int = 8
    kernel_size: int = pipeline.KERNEL_SIZE
    base_channels: int = 16
    tcn_channels: tuple = (16, 32, 64, 64)
    tcn_pool: int = 4
    tcn_fc: int = 64
    enc_channels: tuple = (16, 32, 64)
    enc_pool: int = 4
    enc_fc: int = 64
    disc_channels: tuple = (32, 64, 64)
    disc_conditional: bool = False
    gamma_base_range: tuple = pipeline.GAMMA_BASE_RANGE
    gamma_post_range: tuple = pipeline.GAMMA_POST_RANGE
    extras: dict = field(default_factory=dict)

    def to_manifest(self) -> str:
        lines = ["format = tonescope-model-1"]
        for key in ("d_z", "kernel_size", "base_channels", "tcn_pool",
                    "tcn_fc", "enc_pool", "enc_fc"):
            lines.append("%s = %d" % (key, getattr(self, key)))
        for key in ("tcn_channels", "enc_channels", "disc_channels"):
            lines.append("%s = %s" % (key, ",".join(
                str(v) for v in getattr(self, key))))
        lines.append("disc_conditional = %d" % int(self.disc_conditional))
        lines.append("gamma_base_range = %g,%g" % self.gamma_base_range)
        lines.append("gamma_post_range = %g,%g" % self.gamma_post_range)
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_manifest(text: str) -> "ModelConfig":
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError("bad manifest line %r" % line)
            k, _, v = line.partition("=")
            kv[k.strip()] = v.strip()
        if kv.get("format") != "tonescope-model-1":
            raise FormatError("unknown model manifest format %r"
                              % kv.get("format"))
        cfg = ModelConfig()
        try:
            for key in ("d_z", "kernel_size", "base_channels", "tcn_pool",
                        "tcn_fc", "enc_pool", "enc_fc"):
                if key in kv:
                    setattr(cfg, key, int(kv[key]))
            for key in ("tcn_channels", "enc_channels", "disc_channels"):
                if key in kv:
                    setattr(cfg, key,
                            tuple(int(x) for x in kv[key].split(",")))
            if "disc_conditional" in kv:
                cfg.disc_conditional = bool(int(kv["disc_conditional"]))
            for key in ("gamma_base_range", "gamma_post_range"):
                if key in kv:
                    lo, hi = (float(x) for x in kv[key].split(","))
                    setattr(cfg, key, (lo, hi))
        except ValueError as exc:
            raise FormatError("bad manifest value: %s" % exc) from exc
        return cfg


class EdgePreservingNet(Module):
    """U-Net from (log-luminance, tiled z) to K*K nonnegative taps/pixel."""

    DEPTH = 3  # stride-2 stages; inputs pad to a multiple of 2**DEPTH

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        bc = cfg.base_channels
        cin = 1 + cfg.d_z
        k2 = cfg.kernel_size ** 2
        self.enc0 = self.add_module("enc0", Conv2d(rng, cin, bc))
        self.enc0b = self.add_module("enc0b", Conv2d(rng, bc, bc))
        self.down1 = self.add_module("down1", Conv2d(rng, bc, 2 * bc, stride=2))
        self.enc1 = self.add_module("enc1", Conv2d(rng, 2 * bc, 2 * bc))
        self.down2 = self.add_module("down2", Conv2d(rng, 2 * bc, 4 * bc, stride=2))
        self.enc2 = self.add_module("enc2", Conv2d(rng, 4 * bc, 4 * bc))
        self.down3 = self.add_module("down3", Conv2d(rng, 4 * bc, 4 * bc, stride=2))
        self.bott = self.add_module("bott", Conv2d(rng, 4 * bc, 4 * bc))
        self.up2 = self.add_module("up2", Conv2d(rng, 8 * bc, 4 * bc))
        self.up1 = self.add_module("up1", Conv2d(rng, 6 * bc, 2 * bc))
        self.up0 = self.add_module("up0", Conv2d(rng, 3 * bc, 2 * bc))
        self.head = self.add_module("head", Conv2d(rng, 2 * bc, k2))

    def __call__(self, log_lum: Tensor, z: Tensor) -> Tensor:
        if log_lum.ndim != 4 or log_lum.shape[1] != 1:
            raise ShapeError("EdgePreservingNet expects (N, 1, H, W), got %s"
                             % (log_lum.shape,))
        if z.ndim != 2 or z.shape != (log_lum.shape[0], self.cfg.d_z):
            raise ShapeError("latent shape %s does not match (N, %d)"
                             % (z.shape, self.cfg.d_z))
        n, _, h, w = log_lum.shape
        mult = 2 ** self.DEPTH
        ph = (-h) % mult
        pw = (-w) % mult
        x = log_lum
        if ph or pw:
            # one-sided growth keeps offsets aligned with the input grid
            x = tg.pad_replicate(x, (ph + 1) // 2, (pw + 1) // 2)
            x = x[:, :, :h + ph, :w + pw]
        hp, wp = h + ph, w + pw
        zmap = tg.tile_to_map(z, hp, wp)
        x = tg.concat([x, zmap], axis=1)
        s0 = _lrelu(self.enc0b(_lrelu(self.enc0(x))))
        s1 = _lrelu(self.enc1(_lrelu(self.down1(s0))))
        s2 = _lrelu(self.enc2(_lrelu(self.down2(s1))))
        b = _lrelu(self.bott(_lrelu(self.down3(s2))))
        u2 = _lrelu(self.up2(tg.concat([tg.upsample_nearest2x(b), s2], axis=1)))
        u1 = _lrelu(self.up1(tg.concat([tg.upsample_nearest2x(u2), s1], axis=1)))
        u0 = _lrelu(self.up0(tg.concat([tg.upsample_nearest2x(u1), s0], axis=1)))
        raw = tg.softplus(self.head(u0))
        if ph or pw:
            raw = raw[:, :, :h, :w]
        return raw


class ToneCompressingNet(Module):
    """Conv trunk + pooled features + latent code -> (gamma_base, gamma_post)."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        chans = cfg.tcn_channels
        cin = 1 + cfg.d_z
        self.convs = []
        for i, co in enumerate(chans):
            conv = Conv2d(rng, cin, co, stride=2)
            self.add_module("conv%d" % i, conv)
            self.convs.append(conv)
            cin = co
        feat = chans[-1] * cfg.tcn_pool ** 2
        self.fc1 = self.add_module("fc1", Linear(rng, feat + cfg.d_z, cfg.tcn_fc))
        self.fc2 = self.add_module("fc2", Linear(rng, cfg.tcn_fc, 2))

    def min_input(self) -> int:
        return (2 ** len(self.convs)) * (self.cfg.tcn_pool - 1) + 1

    def __call__(self, log_lum: Tensor, z: Tensor) -> tuple[Tensor, Tensor]:
        if log_lum.ndim != 4 or log_lum.shape[1] != 1:
            raise ShapeError("ToneCompressingNet expects (N, 1, H, W), got %s"
                             % (log_lum.shape,))
        n, _, h, w = log_lum.shape
        need = self.min_input()
        if h < need or w < need:
            log_lum = tg.pad_replicate(log_lum, max(0, (need - h + 1) // 2),
                                       max(0, (need - w + 1) // 2))
            h, w = log_lum.shape[2], log_lum.shape[3]
        x = tg.concat([log_lum, tg.tile_to_map(z, h, w)], axis=1)
        for conv in self.convs:
            x = _lrelu(conv(x))
        x = tg.adaptive_avg_pool2d(x, (self.cfg.tcn_pool, self.cfg.tcn_pool))
        x = x.reshape((n, -1))
        x = tg.concat([x, z], axis=1)
        x = _lrelu(self.fc1(x))
        out = tg.sigmoid(self.fc2(x))
        lo_b, hi_b = self.cfg.gamma_base_range
        lo_p, hi_p = self.cfg.gamma_post_range
        gamma_base = out[:, 0:1] * (hi_b - lo_b) + lo_b
        gamma_post = out[:, 1:2] * (hi_p - lo_p) + lo_p
        return gamma_base, gamma_post


class LatentEncoder(Module):
    """LDR image -> (mu, log-variance) of the latent posterior."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        chans = cfg.enc_channels
        cin = 3
        self.convs = []
        for i, co in enumerate(chans):
            conv = Conv2d(rng, cin, co, stride=2)
            self.add_module("conv%d" % i, conv)
            self.convs.append(conv)
            cin = co
        feat = chans[-1] * cfg.enc_pool ** 2
        self.fc1 = self.add_module("fc1", Linear(rng, feat, cfg.enc_fc))
        self.fc2 = self.add_module("fc2", Linear(rng, cfg.enc_fc, 2 * cfg.d_z))

    def min_input(self) -> int:
        return (2 ** len(self.convs)) * (self.cfg.enc_pool - 1) + 1

    def __call__(self, ldr: Tensor) -> tuple[Tensor, Tensor]:
        if ldr.ndim != 4 or ldr.shape[1] != 3:
            raise ShapeError("LatentEncoder expects (N, 3, H, W), got %s"
                             % (ldr.shape,))
        n, _, h, w = ldr.shape
        need = self.min_input()
        if h < need or w < need:
            ldr = tg.pad_replicate(ldr, max(0, (need - h + 1) // 2),
                                   max(0, (need - w + 1) // 2))
        x = ldr
        for conv in self.convs:
            x = _lrelu(conv(x))
        x = tg.adaptive_avg_pool2d(x, (self.cfg.enc_pool, self.cfg.enc_pool))
        x = x.reshape((n, -1))
        x = _lrelu(self.fc1(x))
        out = self.fc2(x)
        dz = self.cfg.d_z
        return out[:, :dz], out[:, dz:]

    @staticmethod
    def sample(mu: Tensor, logvar: Tensor, noise: np.ndarray) -> Tensor:
        # sigma = exp(logvar / 2) > 0 by construction
        eps = tg.constant(np.asarray(noise), dtype=mu.dtype)
        if eps.shape != mu.shape:
            raise ShapeError("noise shape %s != mu shape %s"
                             % (eps.shape, mu.shape))
        return mu + tg.exp(logvar * 0.5) * eps

    @staticmethod
    def kl(mu: Tensor, logvar: Tensor) -> Tensor:
        return ((mu * mu) + tg.exp(logvar) - logvar - 1.0).sum() * 0.5


class Discriminator(Module):
    """Patch scorer: (N, 3, H, W) -> (N, 1, ceil(H/8), ceil(W/8))."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        chans = cfg.disc_channels
        cin = 3 + (1 if cfg.disc_conditional else 0)
        self.convs = []
        for i, co in enumerate(chans):
            conv = Conv2d(rng, cin, co, stride=2)
            self.add_module("conv%d" % i, conv)
            self.convs.append(conv)
            cin = co
        self.head = self.add_module("head", Conv2d(rng, cin, 1))

    def __call__(self, ldr: Tensor,
                 cond: Optional[Tensor] = None) -> Tensor:
        if ldr.ndim != 4 or ldr.shape[1] != 3:
            raise ShapeError("Discriminator expects (N, 3, H, W), got %s"
                             % (ldr.shape,))
        x = ldr
        if self.cfg.disc_conditional:
            if cond is None:
                raise ShapeError("conditional discriminator needs the "
                                 "log-luminance map")
            x = tg.concat([ldr, cond], axis=1)
        for conv in self.convs:
            x = _lrelu(conv(x))
        return self.head(x)


class ToneMapModel:
    """Generator pair (EdgePreservingNet + ToneCompressingNet)."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.epn = EdgePreservingNet(cfg, rng)
        self.tcn = ToneCompressingNet(cfg, rng)

    @property
    def d_z(self) -> int:
        return self.cfg.d_z

    def params(self) -> Dict[str, Tensor]:
        out = {}
        out.update(self.epn.params("epn."))
        out.update(self.tcn.params("tcn."))
        return out

    def param_count(self) -> int:
        return self.epn.param_count() + self.tcn.param_count()

    # -- rendering ------------------------------------------------------
    def predict(self, lum_t: Tensor, z_t: Tensor):
        """Raw taps and gammas for a prepared log-luminance tensor."""
        raw = self.epn(lum_t, z_t)
        gamma_base, gamma_post = self.tcn(lum_t, z_t)
        return raw, gamma_base, gamma_post

    def render(self, hdr_rgb: np.ndarray, z: np.ndarray,
               gamma_base=None, gamma_post=None,
               dtype=np.float32) -> pipeline.TonemapResult:
        """Tone map an HDR image under latent code z.

        Explicit gamma arguments override the predicted values (validated
        against their ranges). z may be a Tensor to keep the latent
        differentiable for search.
        """
        from . import hdrio
        y = hdrio.luminance(np.asarray(hdr_rgb, dtype=np.float64))
        log_lum = hdrio.log_normalize(y)
        lum_t = tg.constant(log_lum.data.astype(dtype)[None, None],
                            dtype=dtype)
        if isinstance(z, Tensor):
            z_t = z if z.ndim == 2 else z.reshape((1, -1))
        else:
            z_t = tg.constant(np.asarray(z, dtype=dtype).reshape(1, -1),
                              dtype=dtype)
        if z_t.shape != (1, self.cfg.d_z):
            raise ShapeError("latent z shape %s, expected (1, %d)"
                             % (z_t.shape, self.cfg.d_z))
        raw, gb_pred, gp_pred = self.predict(lum_t, z_t)
        gb = gb_pred if gamma_base is None else float(gamma_base)
        gp = gp_pred if gamma_post is None else float(gamma_post)
        return pipeline.tonemap_with_kernels(
            np.asarray(hdr_rgb, dtype=np.float64).astype(dtype),
            raw, gb, gp, kernels_normalized=False)

    # -- persistence ------------------------------------------------------
    def save(self, path) -> None:
        arrays = {name: p.data for name, p in self.params().items()}
        arrays["manifest.txt"] = tg.pack_text(self.cfg.to_manifest())
        tg.save_arrays(path, arrays)

    @classmethod
    def load(cls, path) -> "ToneMapModel":
        arrays = tg.load_arrays(path)
        if "manifest.txt" not in arrays:
            raise FormatError("model file lacks a manifest")
        cfg = ModelConfig.from_manifest(tg.unpack_text(arrays["manifest.txt"]))
        model = cls(cfg, seed=0)
        params = model.params()
        weight_keys = {k for k in arrays if k != "manifest.txt"}
        expected = set(params)
        if weight_keys != expected:
            missing = sorted(expected - weight_keys)[:3]
            extra = sorted(weight_keys - expected)[:3]
            raise FormatError("model weights do not match the manifest "
                              "(missing %s, unexpected %s)" % (missing, extra))
        for name, p in params.items():
            a = arrays[name]
            if a.shape != p.data.shape:
                raise FormatError("weight %r has shape %s, expected %s"
                                  % (name, a.shape, p.data.shape))
            if not np.all(np.isfinite(a)):
                raise FormatError("weight %r has non-finite values" % name)
            p.data = np.ascontiguousarray(a, dtype=np.float32)
        return model
