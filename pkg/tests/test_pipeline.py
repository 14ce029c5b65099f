"""Tone-mapping pipeline against the straight-line reference and its
algebraic invariants."""

import numpy as np
import pytest

import tonescope.tensorgrad as tg
from tonescope import hdrio
from tonescope.errors import RangeError, ShapeError
from tonescope.pipeline import (DETAIL_ALPHA, KERNEL_SIZE, color_correct,
                                compress_base, decompose, enhance_detail,
                                gaussian_kernels, post_process,
                                tonemap_with_kernels)

from reference_pipeline import reference_tonemap


def _random_case(seed, h=8, w=8):
    rng = np.random.default_rng(seed)
    hdr = np.exp(rng.normal(0, 2, (h, w, 3)))
    raw = rng.random((KERNEL_SIZE * KERNEL_SIZE, h, w))
    gb = rng.uniform(0.8, 2.8)
    gp = rng.uniform(1.7, 3.7)
    return hdr, raw, gb, gp


def _run_module(hdr, raw, gb, gp):
    return tonemap_with_kernels(hdr, tg.constant(raw[None], dtype=np.float64),
                                gb, gp)


# ---------------------------------------------------------------------------
# reference equivalence
# ---------------------------------------------------------------------------

def test_matches_reference_bitwise():
    for seed in range(6):
        hdr, raw, gb, gp = _random_case(seed)
        ref = reference_tonemap(hdr, raw, gb, gp)
        res = _run_module(hdr, raw, gb, gp)
        assert np.array_equal(res.ldr, ref["ldr"]), "seed %d" % seed
        assert np.array_equal(res.base.data[0, 0], ref["base"]), "seed %d" % seed
        assert np.array_equal(res.post.data[0, 0], ref["post"]), "seed %d" % seed


def test_matches_reference_rectangular():
    hdr, _, gb, gp = _random_case(7, h=6, w=11)
    rng = np.random.default_rng(8)
    raw = rng.random((KERNEL_SIZE * KERNEL_SIZE, 6, 11))
    ref = reference_tonemap(hdr, raw, gb, gp)
    res = _run_module(hdr, raw, gb, gp)
    assert np.array_equal(res.ldr, ref["ldr"])


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------

def test_delta_kernels_make_detail_zero():
    # kernel mass all on the center tap -> base == input, detail == 0
    rng = np.random.default_rng(0)
    x = tg.constant(rng.random((1, 1, 8, 8)), dtype=np.float64)
    raw = np.zeros((1, KERNEL_SIZE * KERNEL_SIZE, 8, 8))
    raw[:, (KERNEL_SIZE * KERNEL_SIZE) // 2] = 1.0
    base, detail = decompose(x, tg.normalize_kernels(
        tg.constant(raw, dtype=np.float64)))
    assert np.array_equal(base.data, x.data)
    assert np.all(detail.data == 0.0)


def test_base_plus_detail_reconstructs():
    # detail = x - base, so base + detail recovers x up to one rounding
    # of the final add (exact for delta kernels, tested above)
    for seed in range(5):
        x = tg.constant(np.random.default_rng(seed).random((1, 1, 9, 9)),
                        dtype=np.float64)
        raw = tg.constant(np.random.default_rng(seed + 50).random(
            (1, KERNEL_SIZE * KERNEL_SIZE, 9, 9)), dtype=np.float64)
        base, detail = decompose(x, tg.normalize_kernels(raw))
        back = base + detail
        assert np.abs(back.data - x.data).max() <= 2.0 ** -52, "seed %d" % seed


def test_enhancement_fixed_points():
    # E(0) = 0 and E(+-1) = +-1 for any alpha
    for alpha in (0.5, DETAIL_ALPHA, 9.0):
        x = tg.constant(np.array([0.0, 1.0, -1.0]), dtype=np.float64)
        out = enhance_detail(x, alpha)
        assert out.data[0] == 0.0
        assert out.data[1] == 1.0
        assert out.data[2] == -1.0


def test_enhancement_monotone_and_bounded():
    rng = np.random.default_rng(2)
    x = np.sort(rng.uniform(-1, 1, 64))
    out = enhance_detail(tg.constant(x, dtype=np.float64), DETAIL_ALPHA).data
    assert np.all(np.diff(out) > 0)
    assert np.all(np.abs(out) <= 1.0)
    # expansive in the mid range for alpha > 1
    mid = np.abs(x) < 0.5
    assert np.all(np.abs(out[mid]) >= np.abs(x[mid]))


def test_kernel_sums_one():
    rng = np.random.default_rng(3)
    raw = tg.constant(rng.random((1, KERNEL_SIZE * KERNEL_SIZE, 6, 6)),
                      dtype=np.float64)
    k = tg.normalize_kernels(raw)
    sums = k.data.sum(axis=1)
    assert np.all(np.abs(sums - 1.0) <= 1e-6)


def test_degenerate_kernel_becomes_center_delta():
    raw = np.zeros((1, KERNEL_SIZE * KERNEL_SIZE, 3, 3))
    raw[0, :, 1, 1] = 1e-12  # below threshold: replaced by a delta
    raw[0, 0, 0, 0] = 1.0    # healthy pixel keeps its own weights
    k = tg.normalize_kernels(tg.constant(raw, dtype=np.float64))
    center = (KERNEL_SIZE * KERNEL_SIZE) // 2
    assert k.data[0, center, 1, 1] == 1.0
    assert k.data[0, :, 1, 1].sum() == 1.0
    assert k.data[0, 0, 0, 0] == 1.0


def test_degenerate_kernel_gradient_is_zero():
    raw = tg.parameter(np.full((1, KERNEL_SIZE * KERNEL_SIZE, 2, 2), 1e-12),
                       dtype=np.float64)
    k = tg.normalize_kernels(raw)
    k.sum().backward()
    assert np.all(raw.grad == 0.0)


def test_constant_image_is_post_process_fixed_point():
    # values whose pairwise averages are exact in binary
    for v in (0.5, 0.25, 0.75, 1.0):
        x = tg.constant(np.full((1, 1, 8, 8), v), dtype=np.float64)
        out = post_process(x, 2.0)
        assert np.array_equal(out.data, x.data), "v=%g" % v


def test_gamma_one_is_identity_on_base():
    rng = np.random.default_rng(4)
    x = tg.constant(rng.random((1, 1, 5, 5)), dtype=np.float64)
    assert np.array_equal(compress_base(x, 1.0).data, x.data)


def test_gamma_ranges_enforced():
    hdr, raw, _, _ = _random_case(5)
    k = tg.constant(raw[None], dtype=np.float64)
    with pytest.raises(RangeError):
        tonemap_with_kernels(hdr, k, 0.5, 2.0)
    with pytest.raises(RangeError):
        tonemap_with_kernels(hdr, k, 1.0, 4.0)


def test_clamp_only_in_color_correct():
    hdr, raw, gb, gp = _random_case(6)
    res = _run_module(hdr, raw, gb, gp)
    assert res.ldr.min() >= 0.0 and res.ldr.max() <= 1.0
    # the pre-clamp tensor retains out-of-range values when they occur
    assert res.ldr_unclamped.data.max() >= res.ldr.max()


def test_all_black_input():
    res = tonemap_with_kernels(np.zeros((4, 4, 3)),
                               tg.constant(np.full((1, 49, 4, 4), 0.1),
                                           dtype=np.float64), 1.5, 2.0)
    assert np.all(res.ldr == 0.0)


def test_shape_contract():
    with pytest.raises(ShapeError):
        tonemap_with_kernels(np.zeros((4, 4)),  # not (H, W, 3)
                             tg.constant(np.full((1, 49, 4, 4), 0.1),
                                         dtype=np.float64), 1.5, 2.0)


# ---------------------------------------------------------------------------
# smoothing behaviour
# ---------------------------------------------------------------------------

def test_normalized_kernels_keep_base_inside_local_hull():
    # convex weights: every base value lies within the local min/max of
    # the padded input window
    from scipy.ndimage import maximum_filter, minimum_filter
    rng = np.random.default_rng(7)
    x = rng.random((10, 12))
    xt = tg.constant(x[None, None], dtype=np.float64)
    raw = tg.constant(rng.random((1, 49, 10, 12)), dtype=np.float64)
    base = tg.kpn_apply(xt, tg.normalize_kernels(raw)).data[0, 0]
    hi = maximum_filter(x, size=KERNEL_SIZE, mode="nearest")
    lo = minimum_filter(x, size=KERNEL_SIZE, mode="nearest")
    eps = 1e-12
    assert np.all(base <= hi + eps)
    assert np.all(base >= lo - eps)


def test_unnormalized_kernels_break_the_hull():
    # raw positive weights with sums far from one must escape the local
    # hull on generic inputs — this is what normalization is for
    from scipy.ndimage import maximum_filter
    rng = np.random.default_rng(8)
    x = rng.random((10, 12)) + 0.5
    xt = tg.constant(x[None, None], dtype=np.float64)
    raw = rng.random((1, 49, 10, 12)) * 2.0
    base = tg.kpn_apply(xt, tg.constant(raw, dtype=np.float64)).data[0, 0]
    hi = maximum_filter(x, size=KERNEL_SIZE, mode="nearest")
    assert np.any(base > hi)


def test_gaussian_fallback_kernels():
    # raw taps: spatially uniform, positive, and convex after projection
    k = gaussian_kernels(6, 7)
    assert k.shape == (1, 49, 6, 7)
    assert np.all(k.data > 0)
    assert np.all(k.data == k.data[:, :, :1, :1])
    norm = tg.normalize_kernels(k)
    assert np.allclose(norm.data.sum(axis=1), 1.0, atol=1e-12)


def test_scale_covariance_of_log_front_end():
    # scaling radiance by a constant leaves the normalized log image
    # unchanged up to rounding, hence the whole render nearly unchanged
    hdr, raw, gb, gp = _random_case(9)
    a = _run_module(hdr, raw, gb, gp)
    b = _run_module(hdr * 64.0, raw, gb, gp)
    assert np.allclose(a.ldr, b.ldr, atol=1e-9)
