"""Adversarial training with a bimodal latent objective.

One step runs two generator branches on the same HDR patch: a posterior
branch whose latent is sampled from the encoder applied to the target LDR
(reparameterized), and a prior branch with z drawn from N(0, I). The
discriminator updates first on detached renders; the generator and encoder
then update once on the sum of adversarial, reconstruction (posterior
branch), KL, latent-recovery (prior branch), diversity (between the two
branch outputs), and base-smoothness terms. Parameter isolation between
the two updates is byte-checked every step.

Losses are deliberately small closed forms so they can be unit-tested
against hand arithmetic; see the individual docstrings for the exact
reductions. The bookkeeping scalar combines them as
l_g + l_d - lambda_div * l_div + lambda_rec * l_rec + lambda_kl * l_kl
+ lambda_z * l_z + lambda_tv * l_tv.
"""

from __future__ import annotations

import csv
import hashlib
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import hdrio
from . import tensorgrad as tg
from .errors import DomainError, FormatError, ShapeError
from .networks import (Discriminator, LatentEncoder, ModelConfig,
                       ToneMapModel)
from .tensorgrad import Adam, Tensor


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossWeights:
    lambda_rec: float = 1.0
    lambda_div: float = 5.0
    tau: float = 10.0
    lambda_kl: float = 1.0
    lambda_z: float = 1.0
    lambda_tv: float = 1.0


def l1_loss(a: Tensor, b: Union[Tensor, np.ndarray]) -> Tensor:
    """Mean absolute difference over all elements."""
    if not isinstance(b, Tensor):
        b = tg.constant(np.asarray(b), dtype=a.dtype)
    if a.shape != b.shape:
        raise ShapeError("l1_loss: shapes %s vs %s" % (a.shape, b.shape))
    return tg.abs_(a - b).mean()


def hinge_g(d_fake: Tensor) -> Tensor:
    """Generator adversarial term: -mean(D(fake))."""
    return -d_fake.mean()


def hinge_d(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """Discriminator hinge: mean(max(0, 1 - D(real))) + mean(max(0, 1 + D(fake)))."""
    return tg.max_scalar(1.0 - d_real, 0.0).mean() \
        + tg.max_scalar(1.0 + d_fake, 0.0).mean()


def diversity_loss(out1: Tensor, out2: Tensor, z1: np.ndarray,
                   z2: np.ndarray, tau: float = 10.0) -> Tensor:
    """min(mean|out1 - out2| / sum|z1 - z2|, tau).

    The numerator averages over output elements; the denominator sums over
    latent dimensions and enters as a constant (no gradient through z).
    Identical latents make the ratio undefined and raise.
    """
    denom = float(np.abs(np.asarray(z1, dtype=np.float64)
                         - np.asarray(z2, dtype=np.float64)).sum())
    if denom == 0.0:
        raise DomainError("diversity_loss: identical latents")
    ratio = tg.abs_(out1 - out2).mean() * (1.0 / denom)
    return tg.min_scalar(ratio, tau)


def tv_loss(base: Tensor) -> Tensor:
    """Isotropic total variation of the smooth layer.

    Forward differences; the last column (for dx) and last row (for dy)
    contribute zero. Mean over all pixels of sqrt(dx^2 + dy^2 + 1e-12).
    """
    if base.ndim != 4:
        raise ShapeError("tv_loss expects (N, C, H, W), got %s"
                         % (base.shape,))
    n, c, h, w = base.shape
    dx = base[:, :, :, 1:] - base[:, :, :, :w - 1]
    dy = base[:, :, 1:, :] - base[:, :, :h - 1, :]
    zc = tg.constant(np.zeros((n, c, h, 1)), dtype=base.dtype)
    zr = tg.constant(np.zeros((n, c, 1, w)), dtype=base.dtype)
    dx = tg.concat([dx, zc], axis=3)
    dy = tg.concat([dy, zr], axis=2)
    return tg.sqrt(dx * dx + dy * dy + 1e-12).mean()


def total_objective(l_g: float, l_d: float, l_div: float, l_rec: float,
                    l_kl: float, l_z: float, l_tv: float,
                    w: LossWeights = LossWeights()) -> float:
    """Bookkeeping combination of the step's loss terms."""
    return (l_g + l_d - w.lambda_div * l_div + w.lambda_rec * l_rec
            + w.lambda_kl * l_kl + w.lambda_z * l_z + w.lambda_tv * l_tv)


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

def augment(hdr: np.ndarray, ldr: np.ndarray, patch: int,
            rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Aligned random crop plus independent horizontal/vertical flips."""
    h, w = hdr.shape[:2]
    if ldr.shape[:2] != (h, w):
        raise ShapeError("augment: hdr %s vs ldr %s" % (hdr.shape, ldr.shape))
    if h < patch or w < patch:
        raise DomainError("image %dx%d smaller than %d patch" % (h, w, patch))
    i = int(rng.integers(0, h - patch + 1))
    j = int(rng.integers(0, w - patch + 1))
    hp = hdr[i:i + patch, j:j + patch]
    lp = ldr[i:i + patch, j:j + patch]
    if rng.random() < 0.5:
        hp, lp = hp[:, ::-1], lp[:, ::-1]
    if rng.random() < 0.5:
        hp, lp = hp[::-1], lp[::-1]
    return np.ascontiguousarray(hp), np.ascontiguousarray(lp)


# -- classical target synthesis ---------------------------------------------

def _display_encode(hdr: np.ndarray, lum: np.ndarray,
                    mapped: np.ndarray) -> np.ndarray:
    ratio = hdr / np.maximum(lum, 1e-12)[..., None]
    return np.clip(ratio * mapped[..., None], 0.0, 1.0) ** (1.0 / 2.2)


def classical_candidates(hdr: np.ndarray) -> List[Tuple[str, np.ndarray]]:
    """Global operators used to synthesize training targets."""
    lum = hdrio.luminance(hdr)
    lmax = float(lum.max())
    if lmax <= 0:
        raise DomainError("classical_candidates: non-positive luminance")
    geo = float(np.exp(np.mean(np.log(np.maximum(lum, 1e-9)))))
    out: List[Tuple[str, np.ndarray]] = []
    for key in (0.09, 0.18, 0.36):
        scaled = lum * (key / geo)
        out.append(("reinhard_k%g" % key, _display_encode(
            hdr, lum, scaled / (1.0 + scaled))))
    for p in (10.0, 100.0, 1000.0):
        mapped = np.log1p(p * lum / lmax) / np.log1p(p)
        out.append(("log_p%d" % int(p), _display_encode(hdr, lum, mapped)))
    for g in (1.8, 2.2):
        out.append(("gamma_%g" % g,
                    np.clip(hdr / lmax, 0.0, 1.0) ** (1.0 / g)))
    return out


def build_dataset(hdr_dir, out_dir, k: int = 3,
                  cfg=None) -> List[Tuple[str, str, float]]:
    """Score classical renderings and keep the top-k per HDR image.

    Writes PNG targets plus a manifest of (hdr, png, q) lines sorted by
    descending q within each image. Unreadable inputs are skipped with a
    warning; an input directory with no usable image is an error.
    """
    from .tmqi import TmqiConfig, tmqi
    hdr_dir, out_dir = Path(hdr_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries: List[Tuple[str, str, float]] = []
    paths = sorted(hdr_dir.glob("*.hdr"))
    for path in paths:
        try:
            img = hdrio.read_hdr(path)
        except (FormatError, OSError) as exc:
            warnings.warn("skipping %s: %s" % (path.name, exc))
            continue
        hdr = img.data.astype(np.float64)
        base_cfg = cfg or TmqiConfig().for_size(*hdr.shape[:2])
        scored = []
        for name, ldr in classical_candidates(hdr):
            score = tmqi(hdr, ldr, base_cfg)
            scored.append((score.q, name, ldr))
        scored.sort(key=lambda t: -t[0])
        for rank, (q, name, ldr) in enumerate(scored[:k]):
            png = out_dir / ("%s_%d_%s.png" % (path.stem, rank, name))
            hdrio.write_png(png, ldr)
            entries.append((str(path), str(png), q))
    if not entries:
        raise DomainError("no readable .hdr images in %s" % hdr_dir)
    with open(out_dir / "manifest.txt", "w") as fh:
        for hdr_path, png_path, q in entries:
            fh.write("%s\t%s\t%.6f\n" % (hdr_path, png_path, q))
    return entries


def load_pairs(data_dir) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Load (hdr, ldr) training pairs from a dataset directory.

    Reads manifest.txt if present, otherwise pairs <stem>.hdr with
    <stem>.png by name.
    """
    data_dir = Path(data_dir)
    pairs: List[Tuple[np.ndarray, np.ndarray]] = []
    manifest = data_dir / "manifest.txt"
    if manifest.exists():
        for line in manifest.read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise FormatError("bad manifest line: %r" % line)
            hdr = hdrio.read_hdr(parts[0]).data.astype(np.float64)
            ldr = hdrio.read_png(parts[1])
            pairs.append((hdr, ldr))
    else:
        for hdr_path in sorted(data_dir.glob("*.hdr")):
            png = hdr_path.with_suffix(".png")
            if not png.exists():
                continue
            pairs.append((hdrio.read_hdr(hdr_path).data.astype(np.float64),
                          hdrio.read_png(png)))
    if not pairs:
        raise DomainError("no training pairs found in %s" % data_dir)
    return pairs


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    patch: int = 64
    steps: int = 200
    lr_g: float = 5e-5
    lr_d: float = 2e-4
    lambda_rec: float = 1.0
    lambda_div: float = 5.0
    tau: float = 10.0
    lambda_kl: float = 1.0
    lambda_z: float = 1.0
    lambda_tv: float = 1.0
    d_z: int = 8
    channels: int = 16
    seed: int = 0
    data_dir: str = ""
    out_dir: str = "train_out"
    checkpoint_every: int = 0

    def weights(self) -> LossWeights:
        return LossWeights(lambda_rec=self.lambda_rec,
                           lambda_div=self.lambda_div, tau=self.tau,
                           lambda_kl=self.lambda_kl, lambda_z=self.lambda_z,
                           lambda_tv=self.lambda_tv)

    def model_config(self) -> ModelConfig:
        return ModelConfig(d_z=self.d_z, base_channels=self.channels)


_INT_KEYS = {"patch", "steps", "d_z", "channels", "seed", "checkpoint_every"}
_STR_KEYS = {"data_dir", "out_dir"}


def parse_config(text: str) -> TrainConfig:
    """Parse `key = value` lines; '#' starts a comment."""
    known = {f.name for f in fields(TrainConfig)}
    cfg = TrainConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError("line %d: expected 'key = value', got %r"
                              % (lineno, raw.strip()))
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in known:
            raise FormatError("line %d: unknown key %r" % (lineno, key))
        try:
            if key in _STR_KEYS:
                setattr(cfg, key, value)
            elif key in _INT_KEYS:
                setattr(cfg, key, int(value))
            else:
                setattr(cfg, key, float(value))
        except ValueError as exc:
            raise FormatError("line %d: bad value for %s: %s"
                              % (lineno, key, exc)) from None
    return cfg


def read_config(path) -> TrainConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("step", "l_g", "l_d", "l_div", "l_rec", "l_kl", "l_z", "l_tv")


@dataclass
class StepLosses:
    l_g: float
    l_d: float
    l_div: float
    l_rec: float
    l_kl: float
    l_z: float
    l_tv: float
    isolation_ok: bool

    def row(self, step: int) -> list:
        return [step, self.l_g, self.l_d, self.l_div, self.l_rec,
                self.l_kl, self.l_z, self.l_tv]

    def finite(self) -> bool:
        vals = (self.l_g, self.l_d, self.l_div, self.l_rec, self.l_kl,
                self.l_z, self.l_tv)
        return all(np.isfinite(v) for v in vals)


class TrainState:
    """Generator pair, encoder, discriminator and their optimizers."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        mcfg = cfg.model_config()
        self.model = ToneMapModel(mcfg, seed=cfg.seed)
        rng = np.random.default_rng(cfg.seed + 1)
        self.encoder = LatentEncoder(mcfg, rng)
        self.disc = Discriminator(mcfg, rng)
        g_params = dict(self.model.params())
        g_params.update(self.encoder.params("enc."))
        self.opt_g = Adam(g_params, lr=cfg.lr_g)
        self.opt_d = Adam(self.disc.params("disc."), lr=cfg.lr_d)

    def g_params(self) -> Dict[str, Tensor]:
        return dict(self.opt_g.params)

    def d_params(self) -> Dict[str, Tensor]:
        return dict(self.opt_d.params)


def _digest(params: Dict[str, Tensor]) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    for name in sorted(params):
        h.update(name.encode())
        h.update(params[name].data.tobytes())
    return h.digest()


def _zero_grads(params: Dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


# ---------------------------------------------------------------------------
# one step
# ---------------------------------------------------------------------------

def train_step(state: TrainState, hdr_patch: np.ndarray,
               ldr_patch: np.ndarray, rng: np.random.Generator,
               weights: Optional[LossWeights] = None) -> StepLosses:
    """Discriminator update on detached renders, then one generator update."""
    w = weights or state.cfg.weights()
    d_z = state.model.d_z
    real = tg.constant(
        ldr_patch.transpose(2, 0, 1)[None].astype(np.float32),
        dtype=np.float32)

    # posterior branch: latent from the encoder applied to the target
    mu, logvar = state.encoder(real)
    noise = rng.standard_normal(d_z).astype(np.float32)
    z_enc = LatentEncoder.sample(mu, logvar, noise[None])
    res_enc = state.model.render(hdr_patch, z_enc)

    # prior branch: latent from N(0, I)
    z_rand_np = rng.standard_normal(d_z).astype(np.float32)
    z_rand = tg.constant(z_rand_np[None], dtype=np.float32)
    res_rand = state.model.render(hdr_patch, z_rand)

    fake_enc = res_enc.ldr_unclamped
    fake_rand = res_rand.ldr_unclamped

    # -- discriminator first, generator frozen byte-for-byte
    g_before = _digest(state.g_params())
    _zero_grads(state.d_params())
    d_real = state.disc(real)
    d_f1 = state.disc(fake_enc.detach())
    d_f2 = state.disc(fake_rand.detach())
    loss_d = tg.max_scalar(1.0 - d_real, 0.0).mean() \
        + (tg.max_scalar(1.0 + d_f1, 0.0).mean()
           + tg.max_scalar(1.0 + d_f2, 0.0).mean()) * 0.5
    loss_d.backward()
    state.opt_d.step()
    iso_g = _digest(state.g_params()) == g_before

    # -- generator + encoder update against the refreshed discriminator
    d_before = _digest(state.d_params())
    _zero_grads(state.g_params())
    _zero_grads(state.d_params())
    l_g = (hinge_g(state.disc(fake_enc)) + hinge_g(state.disc(fake_rand))) * 0.5
    l_rec = l1_loss(fake_enc, real)
    l_kl = LatentEncoder.kl(mu, logvar)
    mu_f, _ = state.encoder(fake_rand)
    l_z = tg.abs_(mu_f - z_rand).mean()
    l_div = diversity_loss(fake_enc, fake_rand, z_enc.data, z_rand_np[None],
                           w.tau)
    l_tv = tv_loss(res_enc.base)
    obj = l_g - l_div * w.lambda_div + l_rec * w.lambda_rec \
        + l_kl * w.lambda_kl + l_z * w.lambda_z + l_tv * w.lambda_tv
    obj.backward()
    # discriminator grads from the adversarial term are discarded, not applied
    state.opt_g.step()
    iso_d = _digest(state.d_params()) == d_before

    return StepLosses(l_g=l_g.item(), l_d=loss_d.item(), l_div=l_div.item(),
                      l_rec=l_rec.item(), l_kl=l_kl.item(), l_z=l_z.item(),
                      l_tv=l_tv.item(), isolation_ok=iso_g and iso_d)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _state_arrays(state: TrainState) -> Dict[str, np.ndarray]:
    arrays = {}
    for name, p in state.model.params().items():
        arrays["model." + name] = p.data
    for name, p in state.encoder.params("enc.").items():
        arrays[name] = p.data
    for name, p in state.disc.params("disc.").items():
        arrays[name] = p.data
    for key, a in state.opt_g.state_arrays().items():
        arrays["opt_g." + key] = a
    for key, a in state.opt_d.state_arrays().items():
        arrays["opt_d." + key] = a
    return arrays


def save_checkpoint(path, state: TrainState, step: int) -> None:
    arrays = _state_arrays(state)
    text = state.cfg.model_config().to_manifest() \
        + "train_format = tonescope-train-1\n" \
        + "train_step = %d\n" % step \
        + "train_seed = %d\n" % state.cfg.seed
    arrays["manifest.txt"] = tg.pack_text(text)
    tg.save_arrays(path, arrays)


def load_checkpoint(path, cfg: TrainConfig) -> Tuple[TrainState, int]:
    arrays = tg.load_arrays(path)
    if "manifest.txt" not in arrays:
        raise FormatError("checkpoint lacks a manifest")
    kv = {}
    for line in tg.unpack_text(arrays["manifest.txt"]).splitlines():
        if "=" in line:
            k, _, v = line.partition("=")
            kv[k.strip()] = v.strip()
    if kv.get("train_format") != "tonescope-train-1":
        raise FormatError("not a training checkpoint: train_format=%r"
                          % kv.get("train_format"))
    state = TrainState(cfg)
    expected = _state_arrays(state)
    for key, tmpl in expected.items():
        if key not in arrays:
            raise FormatError("checkpoint missing %r" % key)
        if arrays[key].shape != tmpl.shape:
            raise FormatError("checkpoint %r has shape %s, expected %s"
                              % (key, arrays[key].shape, tmpl.shape))
    for name, p in state.model.params().items():
        p.data = arrays["model." + name].astype(p.data.dtype)
    for name, p in state.encoder.params("enc.").items():
        p.data = arrays[name].astype(p.data.dtype)
    for name, p in state.disc.params("disc.").items():
        p.data = arrays[name].astype(p.data.dtype)
    state.opt_g.load_state_arrays(
        {k[len("opt_g."):]: a for k, a in arrays.items()
         if k.startswith("opt_g.")})
    state.opt_d.load_state_arrays(
        {k[len("opt_d."):]: a for k, a in arrays.items()
         if k.startswith("opt_d.")})
    return state, int(kv["train_step"])


# ---------------------------------------------------------------------------
# loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    state: TrainState
    losses: List[StepLosses]
    csv_path: str
    checkpoint_path: str
    model_path: str


def train(cfg: TrainConfig,
          pairs: Optional[Sequence[Tuple[np.ndarray, np.ndarray]]] = None,
          progress=None) -> TrainResult:
    """Run cfg.steps single-patch steps; log, checkpoint, export the model.

    The step sequence is a pure function of the seed: image choice, crop,
    flips and both latent draws all come from one generator, so a rerun
    with the same config reproduces the loss log exactly.
    """
    if pairs is None:
        pairs = load_pairs(cfg.data_dir)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = TrainState(cfg)
    rng = np.random.default_rng(cfg.seed)
    weights = cfg.weights()
    csv_path = out_dir / "losses.csv"
    losses: List[StepLosses] = []
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for step in range(cfg.steps):
            idx = int(rng.integers(0, len(pairs)))
            hdr, ldr = pairs[idx]
            hp, lp = augment(hdr, ldr, cfg.patch, rng)
            sl = train_step(state, hp, lp, rng, weights)
            losses.append(sl)
            writer.writerow(["%d" % step] + ["%.8g" % v for v in sl.row(step)[1:]])
            if progress is not None:
                progress(step, sl)
            if cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(out_dir / ("checkpoint_%06d.tsw" % (step + 1)),
                                state, step + 1)
    ckpt = out_dir / "checkpoint.tsw"
    save_checkpoint(ckpt, state, cfg.steps)
    model_path = out_dir / "model.tsw"
    state.model.save(model_path)
    return TrainResult(state=state, losses=losses, csv_path=str(csv_path),
                       checkpoint_path=str(ckpt), model_path=str(model_path))
