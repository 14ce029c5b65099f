"""Differentiable primitives.

Binary ops accept tensors of identical shape, or a tensor and a scalar
(python number or single-element tensor); general broadcasting is
deliberately out of scope. Domain violations raise DomainError instead of
propagating NaN. Derivative-only guards (never applied to forward values)
keep pow/sqrt/log gradients finite at domain boundaries.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from scipy.special import erf as _scipy_erf

from .. import _core
from ..errors import DomainError, ShapeError
from .tensor import Tensor, as_tensor

GRAD_EPS = 1e-12


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _wrap_operand(a, b, op: str) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        if a.dtype != b.dtype:
            raise ShapeError("%s: dtype mismatch %s vs %s"
                             % (op, a.dtype.name, b.dtype.name))
        return a, b
    if isinstance(a, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.dtype))
    if isinstance(b, Tensor):
        return Tensor(np.asarray(a, dtype=b.dtype)), b
    raise TypeError("%s: needs at least one Tensor operand" % op)


def _check_binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise ShapeError("%s: incompatible shapes %s and %s"
                     % (op, a.shape, b.shape))


def _reduce_to(g: np.ndarray, t: Tensor) -> np.ndarray:
    if g.shape == t.data.shape:
        return g
    return np.asarray(g.sum(dtype=g.dtype)).reshape(t.data.shape)


def _contig(a: np.ndarray) -> np.ndarray:
    # ascontiguousarray promotes 0-d to 1-d; keep scalars 0-d
    return a if a.ndim == 0 else np.ascontiguousarray(a)


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap_operand(a, b, "add")
    _check_binary_shapes(a, b, "add")
    out = a.data + b.data
    return Tensor._result(out, "add", (a, b),
                          (lambda g: _reduce_to(g, a), lambda g: _reduce_to(g, b)))


def sub(a, b) -> Tensor:
    a, b = _wrap_operand(a, b, "sub")
    _check_binary_shapes(a, b, "sub")
    out = a.data - b.data
    return Tensor._result(out, "sub", (a, b),
                          (lambda g: _reduce_to(g, a), lambda g: _reduce_to(-g, b)))


def mul(a, b) -> Tensor:
    a, b = _wrap_operand(a, b, "mul")
    _check_binary_shapes(a, b, "mul")
    out = a.data * b.data
    return Tensor._result(out, "mul", (a, b),
                          (lambda g: _reduce_to(g * b.data, a),
                           lambda g: _reduce_to(g * a.data, b)))


def div(a, b) -> Tensor:
    a, b = _wrap_operand(a, b, "div")
    _check_binary_shapes(a, b, "div")
    out = a.data / b.data
    return Tensor._result(out, "div", (a, b),
                          (lambda g: _reduce_to(g / b.data, a),
                           lambda g: _reduce_to(-g * a.data / (b.data * b.data), b)))


def neg(a: Tensor) -> Tensor:
    return Tensor._result(-a.data, "neg", (a,), (lambda g: -g,))


def pow_(x: Tensor, p) -> Tensor:
    """x ** p with p a python number or a single-element tensor.

    Gradients are guarded at x == 0 (clamped base inside the derivative
    only), so exponents below 1 cannot emit inf during training. Forward
    values are exact; in particular x ** 1.0 is bitwise x.
    """
    if isinstance(p, Tensor):
        if p.size != 1:
            raise ShapeError("pow: exponent tensor must have one element, "
                             "got shape %s" % (p.shape,))
        if p.dtype != x.dtype:
            raise ShapeError("pow: dtype mismatch %s vs %s"
                             % (x.dtype.name, p.dtype.name))
        if np.any(x.data < 0):
            raise DomainError("pow: negative base with tensor exponent")
        pv = float(p.data.reshape(()))
        out = x.data ** pv
        xs = np.maximum(x.data, GRAD_EPS)

        def vjp_x(g):
            return g * (pv * xs ** (pv - 1.0))

        def vjp_p(g):
            # d/dp x^p = x^p log x; the x -> 0+ limit is 0 for p > 0
            term = g * out * np.log(xs)
            term = np.where(x.data < GRAD_EPS, 0.0, term)
            return np.asarray(term.sum(dtype=out.dtype)).reshape(p.data.shape)

        return Tensor._result(out, "pow", (x, p), (vjp_x, vjp_p))

    pv = float(p)
    if not pv.is_integer() and np.any(x.data < 0):
        raise DomainError("pow: negative base with non-integer exponent %g" % pv)
    if pv < 0 and np.any(x.data == 0):
        raise DomainError("pow: zero base with negative exponent %g" % pv)
    out = x.data ** pv

    def vjp(g):
        if pv == 0.0:
            return np.zeros_like(x.data)
        if pv == 1.0:
            return _contig(g)
        if pv.is_integer() and pv >= 2:
            return g * (pv * x.data ** (pv - 1.0))
        xs = np.maximum(x.data, GRAD_EPS)
        return g * (pv * xs ** (pv - 1.0))

    return Tensor._result(out, "pow", (x,), (vjp,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor._result(out, "exp", (x,), (lambda g: g * out,))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise DomainError("log: input has values <= 0 (min %g)" % x.data.min())
    out = np.log(x.data)
    return Tensor._result(out, "log", (x,), (lambda g: g / x.data,))


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0):
        raise DomainError("sqrt: input has values < 0 (min %g)" % x.data.min())
    out = np.sqrt(x.data)

    def vjp(g):
        return g * (0.5 / np.sqrt(np.maximum(x.data, GRAD_EPS)))

    return Tensor._result(out, "sqrt", (x,), (vjp,))


def arctan(x: Tensor) -> Tensor:
    out = np.arctan(x.data)
    return Tensor._result(out, "arctan", (x,),
                          (lambda g: g / (1.0 + x.data * x.data),))


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)
    return Tensor._result(out, "sigmoid", (x,),
                          (lambda g: g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor._result(out, "tanh", (x,), (lambda g: g * (1.0 - out * out),))


def erf(x: Tensor) -> Tensor:
    out = _scipy_erf(x.data).astype(x.dtype, copy=False)
    coef = 2.0 / math.sqrt(math.pi)
    return Tensor._result(out, "erf", (x,),
                          (lambda g: g * (coef * np.exp(-x.data * x.data)),))


def softplus(x: Tensor) -> Tensor:
    d = x.data
    out = np.log1p(np.exp(-np.abs(d))) + np.maximum(d, 0.0)

    def vjp(g):
        return g * sigmoid_np(d)

    return Tensor._result(out, "softplus", (x,), (vjp,))


def sigmoid_np(d: np.ndarray) -> np.ndarray:
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu_leaky(x: Tensor, slope: float = 0.2) -> Tensor:
    out = np.where(x.data > 0, x.data, slope * x.data)

    def vjp(g):
        return np.where(x.data > 0, g, slope * g)

    return Tensor._result(_contig(out), "relu_leaky", (x,), (vjp,))


def abs_(x: Tensor) -> Tensor:
    out = np.abs(x.data)
    return Tensor._result(out, "abs", (x,), (lambda g: g * np.sign(x.data),))


def max_scalar(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = np.maximum(x.data, c)

    def vjp(g):
        return np.where(x.data > c, g, 0.0).astype(x.dtype, copy=False)

    return Tensor._result(out, "max_scalar", (x,), (vjp,))


def min_scalar(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = np.minimum(x.data, c)

    def vjp(g):
        return np.where(x.data < c, g, 0.0).astype(x.dtype, copy=False)

    return Tensor._result(out, "min_scalar", (x,), (vjp,))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    return min_scalar(max_scalar(x, lo), hi)


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def _axes_tuple(axis, ndim: int) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _axes_tuple(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)
    out = np.asarray(out, dtype=x.dtype)

    def vjp(g):
        gg = g
        if not keepdims:
            shape = list(x.shape)
            for a in axes:
                shape[a] = 1
            gg = g.reshape(shape)
        return _contig(np.broadcast_to(gg, x.shape))

    return Tensor._result(out, "sum", (x,), (vjp,))


def mean_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _axes_tuple(axis, x.ndim)
    count = 1
    for a in axes:
        count *= x.shape[a]
    out = x.data.mean(axis=axes, keepdims=keepdims)
    out = np.asarray(out, dtype=x.dtype)
    inv = 1.0 / count

    def vjp(g):
        gg = g
        if not keepdims:
            shape = list(x.shape)
            for a in axes:
                shape[a] = 1
            gg = g.reshape(shape)
        return _contig(np.broadcast_to(gg * inv, x.shape))

    return Tensor._result(out, "mean", (x,), (vjp,))


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)
    return Tensor._result(out, "reshape", (x,),
                          (lambda g: _contig(g.reshape(x.shape)),))


def slice_(x: Tensor, key) -> Tensor:
    out = _contig(x.data[key])

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[key] = g
        return gx

    return Tensor._result(out, "slice", (x,), (vjp,))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat: empty tensor list")
    dt = tensors[0].dtype
    for t in tensors:
        if t.dtype != dt:
            raise ShapeError("concat: dtype mismatch %s vs %s"
                             % (dt.name, t.dtype.name))
    out = np.concatenate([t.data for t in tensors], axis=axis)
    axis = axis % tensors[0].ndim
    splits = []
    start = 0
    for t in tensors:
        splits.append((start, start + t.shape[axis]))
        start += t.shape[axis]

    def make_vjp(i):
        lo, hi = splits[i]

        def vjp(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return _contig(g[tuple(sl)])

        return vjp

    return Tensor._result(out, "concat", tuple(tensors),
                          tuple(make_vjp(i) for i in range(len(tensors))))


def tile_to_map(z: Tensor, h: int, w: int) -> Tensor:
    """(N, C) -> (N, C, h, w) by spatial replication."""
    if z.ndim != 2:
        raise ShapeError("tile_to_map: expected (N, C), got %s" % (z.shape,))
    out = _contig(np.broadcast_to(z.data[:, :, None, None],
                                  (z.shape[0], z.shape[1], h, w)))
    return Tensor._result(out, "tile_to_map", (z,),
                          (lambda g: g.sum(axis=(2, 3)),))


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul: expected 2-D operands, got %s and %s"
                         % (a.shape, b.shape))
    if a.shape[1] != b.shape[0]:
        raise ShapeError("matmul: inner dims disagree: %s vs %s"
                         % (a.shape, b.shape))
    if a.dtype != b.dtype:
        raise ShapeError("matmul: dtype mismatch %s vs %s"
                         % (a.dtype.name, b.dtype.name))
    out = a.data @ b.data
    return Tensor._result(out, "matmul", (a, b),
                          (lambda g: _contig(g @ b.data.T),
                           lambda g: _contig(a.data.T @ g)))


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError("linear: shapes %s @ %s" % (x.shape, w.shape))
    out = x.data @ w.data
    parents = [x, w]
    vjps = [lambda g: _contig(g @ w.data.T), lambda g: _contig(x.data.T @ g)]
    if b is not None:
        if b.shape != (w.shape[1],):
            raise ShapeError("linear: bias shape %s does not match output "
                             "width %d" % (b.shape, w.shape[1]))
        out = out + b.data
        parents.append(b)
        vjps.append(lambda g: g.sum(axis=0))
    return Tensor._result(out, "linear", tuple(parents), tuple(vjps))


# ---------------------------------------------------------------------------
# image ops
# ---------------------------------------------------------------------------

def _pad_replicate(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, [(0, 0)] * (x.ndim - 2) + [(ph, ph), (pw, pw)],
                  mode="edge")


def _fold_replicate_pad(gp: np.ndarray, ph: int, pw: int) -> np.ndarray:
    """Adjoint of replicate padding over the last two axes."""
    if ph == 0 and pw == 0:
        return gp
    h = gp.shape[-2] - 2 * ph
    w = gp.shape[-1] - 2 * pw
    g = gp[..., ph:ph + h, pw:pw + w].copy()
    # top / bottom rows
    if ph:
        g[..., 0, :] += gp[..., :ph, pw:pw + w].sum(axis=-2)
        g[..., h - 1, :] += gp[..., h + ph:, pw:pw + w].sum(axis=-2)
    # left / right columns
    if pw:
        g[..., :, 0] += gp[..., ph:ph + h, :pw].sum(axis=-1)
        g[..., :, w - 1] += gp[..., ph:ph + h, w + pw:].sum(axis=-1)
    # corners
    if ph and pw:
        g[..., 0, 0] += gp[..., :ph, :pw].sum(axis=(-1, -2))
        g[..., 0, w - 1] += gp[..., :ph, w + pw:].sum(axis=(-1, -2))
        g[..., h - 1, 0] += gp[..., h + ph:, :pw].sum(axis=(-1, -2))
        g[..., h - 1, w - 1] += gp[..., h + ph:, w + pw:].sum(axis=(-1, -2))
    return g


def pad_replicate(x: Tensor, ph: int, pw: int) -> Tensor:
    """Replicate-pad the last two axes by (ph, pw) on each side."""
    if x.ndim < 2:
        raise ShapeError("pad_replicate: input must have spatial axes, got %s"
                         % (x.shape,))
    if ph < 0 or pw < 0:
        raise ShapeError("pad_replicate: negative padding (%d, %d)" % (ph, pw))
    out = _pad_replicate(x.data, ph, pw)
    return Tensor._result(out, "pad_replicate", (x,),
                          (lambda g: _fold_replicate_pad(g, ph, pw),))


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1,
           padding: str = "same") -> Tensor:
    """2-D convolution (correlation), NCHW x (Co, Ci, kh, kw).

    padding="same" replicate-pads by k//2 (odd kernels only) and yields
    ceil(H/stride) output rows; padding="valid" uses no padding.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv2d: expected 4-D input and weight, got %s and %s"
                         % (x.shape, w.shape))
    n, ci, h, wd = x.shape
    co, ci_w, kh, kw = w.shape
    if ci != ci_w:
        raise ShapeError("conv2d: input channels %d != weight channels %d"
                         % (ci, ci_w))
    if x.dtype != w.dtype:
        raise ShapeError("conv2d: dtype mismatch %s vs %s"
                         % (x.dtype.name, w.dtype.name))
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("conv2d: same-padding needs odd kernels, got %dx%d"
                             % (kh, kw))
        ph, pw = kh // 2, kw // 2
    elif padding == "valid":
        ph = pw = 0
        if h < kh or wd < kw:
            raise ShapeError("conv2d: input %dx%d smaller than kernel %dx%d"
                             % (h, wd, kh, kw))
    else:
        raise ValueError("conv2d: unknown padding %r" % padding)
    s = int(stride)
    xp = _pad_replicate(x.data, ph, pw)
    ho = (h + 2 * ph - kh) // s + 1
    wo = (wd + 2 * pw - kw) // s + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::s, ::s][:, :, :ho, :wo]
    cols = _contig(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo,
                                                            ci * kh * kw)
    wmat = w.data.reshape(co, -1).T
    out2 = cols @ wmat
    if b is not None:
        if b.shape != (co,):
            raise ShapeError("conv2d: bias shape %s does not match %d output "
                             "channels" % (b.shape, co))
        out2 = out2 + b.data
    out = _contig(out2.reshape(n, ho, wo, co).transpose(0, 3, 1, 2))

    def vjp_x(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, co)
        gcols = g2 @ wmat.T
        gwin = gcols.reshape(n, ho, wo, ci, kh, kw).transpose(0, 3, 1, 2, 4, 5)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += gwin[..., i, j]
        return _fold_replicate_pad(gxp, ph, pw)

    def vjp_w(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, co)
        gw = g2.T @ cols
        return gw.reshape(co, ci, kh, kw)

    parents = [x, w]
    vjps = [vjp_x, vjp_w]
    if b is not None:
        parents.append(b)
        vjps.append(lambda g: g.sum(axis=(0, 2, 3)))
    return Tensor._result(out, "conv2d", tuple(parents), tuple(vjps))


def kpn_apply(x: Tensor, kernels: Tensor) -> Tensor:
    """Per-pixel filtering: out[n,0,y,x] = sum_i k[n,i,y,x] * xpad[n,0,y+dy,x+dx].

    x (N, 1, H, W), kernels (N, K*K, H, W) with K odd; replicate padding.
    This is the hot kernel; the compiled backend is used when available.
    """
    if x.ndim != 4 or x.shape[1] != 1:
        raise ShapeError("kpn_apply: input must be (N, 1, H, W), got %s"
                         % (x.shape,))
    if kernels.ndim != 4 or kernels.shape[0] != x.shape[0] \
            or kernels.shape[2:] != x.shape[2:]:
        raise ShapeError("kpn_apply: kernels %s do not match input %s"
                         % (kernels.shape, x.shape))
    if x.dtype != kernels.dtype:
        raise ShapeError("kpn_apply: dtype mismatch %s vs %s"
                         % (x.dtype.name, kernels.dtype.name))
    k2 = kernels.shape[1]
    k = math.isqrt(k2)
    if k * k != k2 or k % 2 == 0:
        raise ShapeError("kpn_apply: kernel channel count %d is not an odd "
                         "square" % k2)
    n, _, h, wd = x.shape
    p = k // 2
    backend = _core.get_backend()
    xps = [np.pad(x.data[i, 0], p, mode="edge") for i in range(n)]
    out = np.empty((n, 1, h, wd), dtype=x.dtype)
    for i in range(n):
        out[i, 0] = backend.kpn_forward(xps[i], _contig(kernels.data[i]), k)

    def vjp_x(g):
        gx = np.empty_like(x.data)
        for i in range(n):
            gxp, _ = backend.kpn_backward(xps[i], _contig(kernels.data[i]), k,
                                          _contig(g[i, 0]))
            gx[i, 0] = _fold_replicate_pad(gxp, p, p)
        return gx

    def vjp_k(g):
        gk = np.empty_like(kernels.data)
        for i in range(n):
            _, gw = backend.kpn_backward(xps[i], _contig(kernels.data[i]), k,
                                         _contig(g[i, 0]))
            gk[i] = gw
        return gk

    return Tensor._result(out, "kpn_apply", (x, kernels), (vjp_x, vjp_k))


def normalize_kernels(raw: Tensor, eps: float = 1e-8) -> Tensor:
    """Divide each per-pixel kernel by its tap sum (convexity projection).

    raw (N, K2, H, W), taps nonnegative. Pixels whose tap sum falls below
    eps get the center delta kernel; that region is piecewise constant, so
    its gradient is zero. Tap sums accumulate sequentially to stay
    bit-compatible with straight-line per-pixel references.
    """
    if raw.ndim != 4:
        raise ShapeError("normalize_kernels: expected (N, K2, H, W), got %s"
                         % (raw.shape,))
    if np.any(raw.data < 0):
        raise DomainError("normalize_kernels: negative tap weight")
    k2 = raw.shape[1]
    s = raw.data[:, 0].copy()
    for i in range(1, k2):
        s = s + raw.data[:, i]
    mask = s < eps
    safe = np.where(mask, 1.0, s).astype(raw.dtype, copy=False)
    out = raw.data / safe[:, None]
    if mask.any():
        idx = np.where(mask)
        out[idx[0], :, idx[1], idx[2]] = 0.0
        out[idx[0], k2 // 2, idx[1], idx[2]] = 1.0

    def vjp(g):
        dot = np.einsum("nkhw,nkhw->nhw", g, out)
        graw = (g - dot[:, None]) / safe[:, None]
        if mask.any():
            graw = np.where(mask[:, None], 0.0, graw)
        return graw.astype(raw.dtype, copy=False)

    return Tensor._result(out.astype(raw.dtype, copy=False), "normalize_kernels",
                          (raw,), (vjp,))


def upsample_nearest2x(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ShapeError("upsample_nearest2x: expected 4-D input, got %s"
                         % (x.shape,))
    n, c, h, w = x.shape
    out = _contig(np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3))

    def vjp(g):
        return _contig(g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))

    return Tensor._result(out, "upsample_nearest2x", (x,), (vjp,))


def avgpool2x2(x: Tensor) -> Tensor:
    """2x2 mean pooling with stride 2; odd extents replicate the last
    row/column first."""
    if x.ndim != 4:
        raise ShapeError("avgpool2x2: expected 4-D input, got %s" % (x.shape,))
    n, c, h, w = x.shape
    d = x.data
    if h % 2 or w % 2:
        d = np.pad(d, [(0, 0), (0, 0), (0, h % 2), (0, w % 2)], mode="edge")
    he, we = d.shape[2], d.shape[3]
    out = d.reshape(n, c, he // 2, 2, we // 2, 2).mean(axis=(3, 5))
    out = out.astype(x.dtype, copy=False)

    def vjp(g):
        ge = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25
        if h % 2:
            ge[:, :, h - 1, :] += ge[:, :, h, :]
            ge = ge[:, :, :h, :]
        if w % 2:
            ge[:, :, :, w - 1] += ge[:, :, :, w]
            ge = ge[:, :, :, :w]
        return _contig(ge.astype(x.dtype, copy=False))

    return Tensor._result(_contig(out), "avgpool2x2", (x,), (vjp,))


def adaptive_avg_pool2d(x: Tensor, out_hw: tuple[int, int]) -> Tensor:
    if x.ndim != 4:
        raise ShapeError("adaptive_avg_pool2d: expected 4-D input, got %s"
                         % (x.shape,))
    n, c, h, w = x.shape
    oh, ow = out_hw
    if oh > h or ow > w:
        raise ShapeError("adaptive_avg_pool2d: output %s larger than input %s"
                         % ((oh, ow), (h, w)))
    ys = [(i * h) // oh for i in range(oh)] + [h]
    xs = [(j * w) // ow for j in range(ow)] + [w]
    out = np.empty((n, c, oh, ow), dtype=x.dtype)
    for i in range(oh):
        for j in range(ow):
            out[:, :, i, j] = x.data[:, :, ys[i]:ys[i + 1],
                                     xs[j]:xs[j + 1]].mean(axis=(2, 3))

    def vjp(g):
        gx = np.zeros_like(x.data)
        for i in range(oh):
            for j in range(ow):
                area = (ys[i + 1] - ys[i]) * (xs[j + 1] - xs[j])
                gx[:, :, ys[i]:ys[i + 1], xs[j]:xs[j + 1]] += \
                    (g[:, :, i, j] / area)[:, :, None, None]
        return gx

    return Tensor._result(out, "adaptive_avg_pool2d", (x,), (vjp,))


# ---------------------------------------------------------------------------
# operator sugar on Tensor
# ---------------------------------------------------------------------------

def _install_operators():
    Tensor.__add__ = lambda a, b: add(a, b)
    Tensor.__radd__ = lambda a, b: add(b, a)
    Tensor.__sub__ = lambda a, b: sub(a, b)
    Tensor.__rsub__ = lambda a, b: sub(b, a)
    Tensor.__mul__ = lambda a, b: mul(a, b)
    Tensor.__rmul__ = lambda a, b: mul(b, a)
    Tensor.__truediv__ = lambda a, b: div(a, b)
    Tensor.__rtruediv__ = lambda a, b: div(b, a)
    Tensor.__neg__ = neg
    Tensor.__pow__ = pow_
    Tensor.__matmul__ = matmul
    Tensor.__getitem__ = slice_
    Tensor.sum = sum_
    Tensor.mean = mean_
    Tensor.reshape = reshape


_install_operators()
