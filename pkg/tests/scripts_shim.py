"""Small synthetic radiance scenes for tests that build datasets on the fly.

Kept in sync with scripts/gen_fixtures.py so ad-hoc scenes look like the
committed fixtures.
"""

import numpy as np


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
