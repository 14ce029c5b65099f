"""Command-line interface.

Exit codes: 0 success; 2 unreadable/undecodable input (file I/O and
format errors); 3 contract violation (shape, domain, or range errors in
otherwise well-formed requests).

Without a weights file the tonemap command falls back to fixed Gaussian
smoothing kernels and mid-range gammas, so the full pipeline stays
exercisable before any training has happened; the latent code is inert in
that mode.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import hdrio
from . import tensorgrad as tg
from ._core import backend_name
from .errors import ContractError, FormatError, TonescopeError
from .networks import ToneMapModel
from .pipeline import (GAMMA_BASE_RANGE, GAMMA_POST_RANGE, gaussian_kernels,
                       tonemap_with_kernels)

FALLBACK_GAMMA_BASE = 0.5 * sum(GAMMA_BASE_RANGE)
FALLBACK_GAMMA_POST = 0.5 * sum(GAMMA_POST_RANGE)

WEIGHTS_ENV = "TONESCOPE_WEIGHTS"


def _load_model(path: Optional[str]) -> Optional[ToneMapModel]:
    path = path or os.environ.get(WEIGHTS_ENV)
    if not path:
        return None
    return ToneMapModel.load(path)


def _parse_z(text: str, d_z: int) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ContractError("--z must be comma-separated numbers") from None
    if len(vals) != d_z:
        raise ContractError("--z has %d values, model wants %d"
                            % (len(vals), d_z))
    z = np.asarray(vals, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ContractError("--z must be finite")
    return z


def _resolve_z(args, d_z: int) -> np.ndarray:
    if args.z is not None:
        return _parse_z(args.z, d_z)
    seed = args.z_seed if args.z_seed is not None else 0
    return np.random.default_rng(seed).standard_normal(d_z)


def _render(model: Optional[ToneMapModel], hdr: np.ndarray, z: np.ndarray,
            gamma_base: Optional[float], gamma_post: Optional[float]):
    if model is not None:
        return model.render(hdr, z, gamma_base=gamma_base,
                            gamma_post=gamma_post)
    h, w = hdr.shape[:2]
    raw = gaussian_kernels(h, w)
    gb = FALLBACK_GAMMA_BASE if gamma_base is None else float(gamma_base)
    gp = FALLBACK_GAMMA_POST if gamma_post is None else float(gamma_post)
    with tg.no_grad():
        return tonemap_with_kernels(hdr.astype(np.float32), raw, gb, gp)


def _score(hdr: np.ndarray, ldr: np.ndarray):
    from .tmqi import TmqiConfig, tmqi
    cfg = TmqiConfig().for_size(*hdr.shape[:2])
    return tmqi(hdr, ldr, cfg)


def cmd_tonemap(args) -> int:
    model = _load_model(args.weights)
    hdr = hdrio.read_hdr(getattr(args, "in")).data.astype(np.float64)
    d_z = model.d_z if model is not None else 8
    z = _resolve_z(args, d_z)
    res = _render(model, hdr, z, args.gamma_base, args.gamma_post)
    out = hdrio.srgb_encode(res.ldr) if args.srgb else res.ldr
    hdrio.write_png(args.out, out)
    score = _score(hdr, out)
    print("q=%.6f s=%.6f n=%.6f" % (score.q, score.s, score.n))
    print("gamma_base=%.4f gamma_post=%.4f" % (res.gamma_base, res.gamma_post))
    return 0


def cmd_tmqi(args) -> int:
    hdr = hdrio.read_hdr(args.hdr).data.astype(np.float64)
    ldr = hdrio.read_png(args.ldr)
    score = _score(hdr, ldr)
    print("%.6f %.6f %.6f" % (score.q, score.s, score.n))
    return 0


def cmd_train(args) -> int:
    from .training import read_config, train
    cfg = read_config(args.config)
    if not cfg.data_dir:
        raise ContractError("config must set data_dir")

    def progress(step, sl):
        if (step + 1) % 10 == 0 or step == 0:
            print("step %d: l_g=%.4f l_d=%.4f l_rec=%.4f"
                  % (step, sl.l_g, sl.l_d, sl.l_rec), flush=True)

    res = train(cfg, progress=progress)
    print("wrote %s and %s" % (res.checkpoint_path, res.model_path))
    return 0


def cmd_explore(args) -> int:
    from .latentopt import candidate_sweep, run_report
    model = _load_model(args.weights)
    if model is None:
        raise ContractError("explore needs trained weights (--weights or "
                            "%s)" % WEIGHTS_ENV)
    hdr = hdrio.read_hdr(getattr(args, "in")).data.astype(np.float64)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cands = candidate_sweep(model, hdr, n_starts=args.starts,
                            steps=args.steps, seed=args.seed)
    previews = []
    for i, c in enumerate(cands):
        res = model.render(hdr, c.z)
        path = out_dir / ("candidate_%02d.png" % i)
        hdrio.write_png(path, res.ldr)
        previews.append(str(path))
    report = run_report(cands, previews)
    (out_dir / "report.txt").write_text(report)
    sys.stdout.write(report)
    return 0


def cmd_dataset(args) -> int:
    from .training import build_dataset
    entries = build_dataset(args.hdr_dir, args.out_dir, k=args.k)
    print("wrote %d pairs to %s" % (len(entries), args.out_dir))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app
    app = create_app(model_path=args.weights, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_backend(args) -> int:
    print(backend_name())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tonescope",
                                description="Explorable HDR tone mapping")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("tonemap", help="render one HDR image to PNG")
    t.add_argument("--in", required=True, help="input .hdr (radiance RGBE)")
    t.add_argument("--out", required=True, help="output .png")
    t.add_argument("--weights", help="trained model weights")
    t.add_argument("--z", help="comma-separated latent code")
    t.add_argument("--z-seed", type=int, help="seed for a random latent")
    t.add_argument("--gamma-base", type=float, help="override base gamma")
    t.add_argument("--gamma-post", type=float, help="override post gamma")
    t.add_argument("--srgb", action="store_true",
                   help="apply the sRGB transfer to the output")
    t.set_defaults(fn=cmd_tonemap)

    q = sub.add_parser("tmqi", help="score an LDR rendering against its HDR")
    q.add_argument("--hdr", required=True)
    q.add_argument("--ldr", required=True)
    q.set_defaults(fn=cmd_tmqi)

    tr = sub.add_parser("train", help="train from a key=value config file")
    tr.add_argument("--config", required=True)
    tr.set_defaults(fn=cmd_train)

    e = sub.add_parser("explore", help="multi-start latent search")
    e.add_argument("--in", required=True)
    e.add_argument("--starts", type=int, default=4)
    e.add_argument("--steps", type=int, default=30)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out-dir", required=True)
    e.add_argument("--weights")
    e.set_defaults(fn=cmd_explore)

    d = sub.add_parser("dataset", help="build training pairs from .hdr files")
    d.add_argument("--hdr-dir", required=True)
    d.add_argument("--out-dir", required=True)
    d.add_argument("--k", type=int, default=3)
    d.set_defaults(fn=cmd_dataset)

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=7734)
    s.add_argument("--weights")
    s.add_argument("--static", help="directory of built UI assets to serve")
    s.set_defaults(fn=cmd_serve)

    b = sub.add_parser("backend", help="print the active compute backend")
    b.set_defaults(fn=cmd_backend)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FormatError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except ContractError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 3
    except TonescopeError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
