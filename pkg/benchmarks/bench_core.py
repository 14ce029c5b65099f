"""Compare the compiled kernel core against the pure-numpy fallback.

Times the per-pixel kernel application (forward and backward) and RGBE
scanline decoding on a few sizes, and re-checks that both backends agree
bit for bit — speed must never buy a different rounding.

Run:  python3 benchmarks/bench_core.py
"""

import io
import time

import numpy as np

from tonescope import hdrio
from tonescope._core import available_backends, get_backend

K = 7
SIZES = [(64, 64), (256, 256), (512, 512)]
REPEATS = 5


def timeit(fn, repeats=REPEATS):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kpn(backend, h, w, dtype):
    rng = np.random.default_rng(0)
    pad = K // 2
    xp = rng.random((h + 2 * pad, w + 2 * pad), dtype=np.float64).astype(dtype)
    wk = rng.random((K * K, h, w), dtype=np.float64).astype(dtype)
    gout = rng.random((h, w), dtype=np.float64).astype(dtype)
    fwd = timeit(lambda: backend.kpn_forward(xp, wk, K))
    bwd = timeit(lambda: backend.kpn_backward(xp, wk, K, gout))
    return fwd, bwd, backend.kpn_forward(xp, wk, K), \
        backend.kpn_backward(xp, wk, K, gout)


def bench_rgbe(backend, h, w):
    rng = np.random.default_rng(1)
    hdr = np.exp(rng.normal(0, 3, (h, w, 3)))
    buf = io.BytesIO()
    hdrio.write_hdr(buf, hdr)
    blob = buf.getvalue()
    offset = blob.index(b"\n-Y") + 1
    offset = blob.index(b"\n", offset) + 1
    dec = timeit(lambda: backend.rgbe_decode_scanlines(blob, offset, w, h))
    return dec, backend.rgbe_decode_scanlines(blob, offset, w, h)[0]


def main():
    names = available_backends()
    print("backends:", ", ".join(names))
    if len(names) < 2:
        print("compiled core unavailable; nothing to compare")

    for h, w in SIZES:
        row = {}
        for dtype in (np.float32, np.float64):
            outs = {}
            for name in names:
                b = get_backend(name)
                fwd, bwd, of, ob = bench_kpn(b, h, w, dtype)
                row[(name, dtype.__name__)] = (fwd, bwd)
                outs[name] = (of, ob)
            if len(names) == 2:
                a, c = (outs[n] for n in names)
                same = np.array_equal(a[0], c[0]) and \
                    all(np.array_equal(x, y) for x, y in zip(a[1], c[1]))
                tag = "bit-identical" if same else "MISMATCH"
            else:
                tag = "single backend"
            for name in names:
                fwd, bwd = row[(name, dtype.__name__)]
                print("kpn %4dx%-4d %-7s %-6s fwd %8.3f ms  bwd %8.3f ms  [%s]"
                      % (h, w, dtype.__name__, name, fwd * 1e3, bwd * 1e3, tag))

        decs = {}
        for name in names:
            b = get_backend(name)
            dec, out = bench_rgbe(b, h, w)
            decs[name] = out
            print("rgbe %4dx%-4d decode %-6s %8.3f ms"
                  % (h, w, name, dec * 1e3))
        if len(names) == 2:
            a, c = (decs[n] for n in names)
            print("rgbe outputs identical:", np.array_equal(a, c))


if __name__ == "__main__":
    main()
