"""Quality-climbing search over the latent code of a trained model.

The render and the quality index are both differentiable, so dQ/dz is one
backward pass through the composed graph. A run records the full (z_t, q_t)
trajectory; a sweep launches several seeded starts, deduplicates converged
latents that landed in the same basin, and ranks survivors by quality.

The model is read-only here: a byte digest of its weights is taken before
the loop and re-checked after, so any accidental in-place update surfaces
as a contract violation rather than silent drift.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import hdrio
from . import tensorgrad as tg
from .errors import ContractError, DomainError
from .networks import ToneMapModel
from .tensorgrad import Adam
from .tmqi import TmqiConfig, tmqi_tensor

DEFAULT_STEPS = 30
DEFAULT_LR = 0.05
# two converged latents closer than this (L1) count as the same basin
DEDUP_RADIUS_PER_DIM = 0.1


@dataclass
class OptRun:
    z0: np.ndarray
    trajectory: List[Tuple[np.ndarray, float]]  # (z_t, q_t), t = 0..T
    z_star: np.ndarray
    q_star: float
    s_star: float
    n_star: float
    aborted: bool
    steps: int
    lr: float

    @property
    def improvement(self) -> float:
        return self.trajectory[-1][1] - self.trajectory[0][1]


@dataclass
class Candidate:
    z: np.ndarray
    q: float
    s: float
    n: float
    run: OptRun


def _weights_digest(model: ToneMapModel) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    for name in sorted(model.params()):
        h.update(name.encode())
        h.update(model.params()[name].data.tobytes())
    return h.digest()


def optimize_latent(model: ToneMapModel, hdr_rgb: np.ndarray,
                    z0: Optional[np.ndarray] = None,
                    steps: int = DEFAULT_STEPS, lr: float = DEFAULT_LR,
                    seed: int = 0,
                    tmqi_cfg: Optional[TmqiConfig] = None) -> OptRun:
    """Ascend q from one start; returns the full trajectory.

    z0 defaults to a standard-normal draw from `seed`. A non-finite score
    at any step aborts the run, returning the trajectory accumulated so
    far with the aborted flag set. steps=0 just scores the start.
    """
    hdr_rgb = np.asarray(hdr_rgb, dtype=np.float64)
    if steps < 0:
        raise DomainError("steps must be >= 0")
    if tmqi_cfg is None:
        tmqi_cfg = TmqiConfig().for_size(*hdr_rgb.shape[:2])
    if z0 is None:
        z0 = np.random.default_rng(seed).standard_normal(model.d_z)
    z0 = np.asarray(z0, dtype=np.float64).reshape(-1)
    if z0.shape != (model.d_z,):
        raise DomainError("z0 has %d dims, model wants %d"
                          % (z0.size, model.d_z))
    before = _weights_digest(model)
    hdr_lum = hdrio.luminance(hdr_rgb)
    z = tg.parameter(z0[None].astype(np.float32), name="z")
    opt = Adam({"z": z}, lr=lr)
    traj: List[Tuple[np.ndarray, float]] = []
    s_v = n_v = float("nan")
    aborted = False
    for t in range(steps + 1):
        res = model.render(hdr_rgb, z)
        q, s, n = tmqi_tensor(hdr_lum, res.ldr_unclamped, tmqi_cfg)
        q_v, s_v, n_v = q.item(), s.item(), n.item()
        traj.append((z.data[0].astype(np.float64).copy(), q_v))
        if not np.isfinite(q_v):
            aborted = True
            break
        if t == steps:
            break
        z.grad = None
        (-q).backward()
        opt.step()
    if _weights_digest(model) != before:
        raise ContractError("latent search mutated model weights")
    z_star, q_star = traj[-1]
    return OptRun(z0=z0, trajectory=traj, z_star=z_star, q_star=q_star,
                  s_star=s_v, n_star=n_v, aborted=aborted, steps=steps,
                  lr=lr)


def candidate_sweep(model: ToneMapModel, hdr_rgb: np.ndarray,
                    n_starts: int = 4, steps: int = DEFAULT_STEPS,
                    lr: float = DEFAULT_LR, seed: int = 0,
                    tmqi_cfg: Optional[TmqiConfig] = None) -> List[Candidate]:
    """Multi-start ascent with basin deduplication.

    Starts are standard-normal draws from one seeded generator. Converged
    latents within 0.1 * d_z of an already-kept candidate (L1) are merged;
    the ordering before the greedy merge is (descending q, then z
    lexicographic), which makes the result deterministic under ties.
    Aborted runs are dropped.
    """
    if n_starts < 1:
        raise DomainError("n_starts must be >= 1")
    rng = np.random.default_rng(seed)
    runs = []
    for _ in range(n_starts):
        z0 = rng.standard_normal(model.d_z)
        runs.append(optimize_latent(model, hdr_rgb, z0=z0, steps=steps,
                                    lr=lr, tmqi_cfg=tmqi_cfg))
    cands = [Candidate(z=r.z_star, q=r.q_star, s=r.s_star, n=r.n_star, run=r)
             for r in runs if not r.aborted]
    cands.sort(key=lambda c: (-c.q, tuple(c.z)))
    radius = DEDUP_RADIUS_PER_DIM * model.d_z
    kept: List[Candidate] = []
    for c in cands:
        if all(np.abs(c.z - k.z).sum() > radius for k in kept):
            kept.append(c)
    return kept


def run_report(candidates: Sequence[Candidate],
               previews: Optional[Sequence[str]] = None) -> str:
    """Human-readable ranking of a sweep's surviving candidates."""
    lines = ["rank\tq\ts\tn\tz\tpreview"]
    for i, c in enumerate(candidates):
        preview = previews[i] if previews and i < len(previews) else "-"
        zs = ",".join("%.5f" % v for v in c.z)
        lines.append("%d\t%.6f\t%.6f\t%.6f\t%s\t%s"
                     % (i, c.q, c.s, c.n, zs, preview))
    return "\n".join(lines) + "\n"
