"""Regenerate the committed test fixtures.

Writes three groups under tests/fixtures/:

  tmqi/    six 192x192 (hdr, png) scoring pairs with a manifest of pinned
           reference q/s/n values. Scores are computed on the data read
           back from disk, so the manifest pins the whole file round trip.
  latent/  three 64x64 HDR scenes for latent-search tests.
  train/   four 96x96 HDR scenes plus key-0.18 global-operator targets,
           paired by stem.

Everything derives from fixed seeds; rerunning the script reproduces the
files byte for byte.
"""

import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from tonescope import hdrio  # noqa: E402
from tmqi_reference import tmqi_reference  # noqa: E402

FIXTURES = ROOT / "tests" / "fixtures"


# ---------------------------------------------------------------------------
# scenes
# ---------------------------------------------------------------------------

def scene_blobs(seed, h, w):
    """Smooth illumination field with a few hot gaussian blobs."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    log_l = rng.normal(0, 0.5) + 2.5 * np.sin(
        2 * np.pi * (rng.random() + yy * rng.uniform(1, 3)))
    log_l += 2.0 * np.cos(2 * np.pi * xx * rng.uniform(1, 4))
    for _ in range(4):
        cy, cx = rng.uniform(0.1, 0.9, 2)
        s = rng.uniform(0.02, 0.08)
        log_l += rng.uniform(2, 5) * np.exp(
            -((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s ** 2))
    lum = np.exp(log_l)
    tint = rng.uniform(0.4, 1.0, 3)
    rgb = lum[..., None] * tint[None, None, :]
    rgb *= 0.8 + 0.4 * rng.random((h, w, 3))
    return rgb


def scene_wedge(seed, h, w):
    """Stepped exposure wedge over ~6 decades with texture."""
    rng = np.random.default_rng(seed)
    cols = np.floor(np.linspace(0, 11.999, w))
    lum = 10.0 ** (cols / 2.0 - 3.0)
    img = np.tile(lum, (h, 1))
    img *= np.exp(rng.normal(0, 0.3, (h, w)))
    tint = rng.uniform(0.5, 1.0, 3)
    return img[..., None] * tint[None, None, :]


def scene_interference(seed, h, w):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    f1, f2 = rng.uniform(3, 9, 2)
    lum = np.exp(2.0 * np.sin(2 * np.pi * f1 * yy) *
                 np.cos(2 * np.pi * f2 * xx) + rng.normal(0, 0.15, (h, w)))
    return lum[..., None] * rng.uniform(0.4, 1.0, 3)


# ---------------------------------------------------------------------------
# classical operators for the LDR side
# ---------------------------------------------------------------------------

def _encode(hdr, lum, mapped, gamma=2.2):
    ratio = hdr / np.maximum(lum, 1e-12)[..., None]
    return np.clip(ratio * mapped[..., None], 0, 1) ** (1.0 / gamma)


def op_reinhard(hdr, key=0.18):
    lum = hdrio.luminance(hdr)
    geo = float(np.exp(np.mean(np.log(np.maximum(lum, 1e-9)))))
    s = lum * (key / geo)
    return _encode(hdr, lum, s / (1 + s))


def op_log(hdr, p=100.0):
    lum = hdrio.luminance(hdr)
    mapped = np.log1p(p * lum / lum.max()) / np.log1p(p)
    return _encode(hdr, lum, mapped)


def op_gamma(hdr, g=2.2):
    return np.clip(hdr / hdrio.luminance(hdr).max(), 0, 1) ** (1.0 / g)


def op_clip(hdr, percentile=95.0):
    lum = hdrio.luminance(hdr)
    top = np.percentile(lum, percentile)
    return _encode(hdr, lum, np.clip(lum / top, 0, 1))


# ---------------------------------------------------------------------------
# groups
# ---------------------------------------------------------------------------

def gen_tmqi_pairs():
    out = FIXTURES / "tmqi"
    out.mkdir(parents=True, exist_ok=True)
    specs = [
        ("blobs_a", scene_blobs(101, 192, 192), lambda h: op_reinhard(h)),
        ("blobs_b", scene_blobs(102, 192, 192), lambda h: op_log(h, 100.0)),
        ("wedge", scene_wedge(103, 192, 192), lambda h: op_log(h, 1000.0)),
        ("interf", scene_interference(104, 192, 192), lambda h: op_gamma(h)),
        ("blobs_c", scene_blobs(105, 208, 192), lambda h: op_clip(h)),
        ("mix", scene_blobs(106, 192, 224) * 0.5
         + scene_interference(107, 192, 224), lambda h: op_reinhard(h, 0.36)),
    ]
    lines = []
    for name, hdr, op in specs:
        hdr_path = out / ("%s.hdr" % name)
        png_path = out / ("%s.png" % name)
        hdrio.write_hdr(hdr_path, hdr)
        ldr = op(hdrio.read_hdr(hdr_path).data.astype(np.float64))
        hdrio.write_png(png_path, ldr)
        # pin the reference scores of what a reader will actually see
        hdr_rt = hdrio.read_hdr(hdr_path).data.astype(np.float64)
        ldr_rt = hdrio.read_png(png_path)
        q, s, n = tmqi_reference(hdr_rt, ldr_rt, levels=5)
        lines.append("%s.hdr\t%s.png\t%.12f\t%.12f\t%.12f"
                     % (name, name, q, s, n))
        print("tmqi %-8s q=%.6f s=%.6f n=%.6f" % (name, q, s, n))
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def gen_latent():
    out = FIXTURES / "latent"
    out.mkdir(parents=True, exist_ok=True)
    for i, seed in enumerate((10, 11, 12)):
        hdrio.write_hdr(out / ("search_%d.hdr" % i),
                        scene_blobs(seed, 64, 64))
    print("latent fixtures: 3")


def gen_train():
    out = FIXTURES / "train"
    out.mkdir(parents=True, exist_ok=True)
    for i in range(4):
        hdr = scene_blobs(i, 96, 96)
        hdrio.write_hdr(out / ("toy_%d.hdr" % i), hdr)
        hdr_rt = hdrio.read_hdr(out / ("toy_%d.hdr" % i)).data.astype(np.float64)
        hdrio.write_png(out / ("toy_%d.png" % i), op_reinhard(hdr_rt))
    print("train fixtures: 4 pairs")


if __name__ == "__main__":
    gen_tmqi_pairs()
    gen_latent()
    gen_train()
