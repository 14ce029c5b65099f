"""Minimal reverse-mode autodiff on numpy arrays.

Float32 by default; float64 end-to-end for gradient checking. No general
broadcasting: ops take same-shape tensors or a tensor and a scalar.
"""

from .container import load_arrays, pack_text, save_arrays, unpack_text
from .ops import (abs_, adaptive_avg_pool2d, add, arctan, avgpool2x2, clamp,
                  concat, conv2d, div, erf, exp, kpn_apply, linear, log,
                  matmul, max_scalar, mean_, min_scalar, mul, neg,
                  normalize_kernels, pad_replicate, pow_, relu_leaky, reshape, sigmoid,
                  slice_, softplus, sqrt, sub, sum_, tanh, tile_to_map,
                  upsample_nearest2x)
from .optim import Adam
from .tensor import (DEFAULT_DTYPE, Tape, Tensor, as_tensor, constant,
                     grad_enabled, no_grad, parameter)

__all__ = [
    "Tensor", "Tape", "no_grad", "grad_enabled", "as_tensor", "constant",
    "parameter", "DEFAULT_DTYPE", "Adam",
    "save_arrays", "load_arrays", "pack_text", "unpack_text",
    "add", "sub", "mul", "div", "neg", "pow_", "exp", "log", "sqrt",
    "arctan", "sigmoid", "tanh", "erf", "softplus", "relu_leaky", "abs_",
    "max_scalar", "min_scalar", "clamp", "sum_", "mean_", "reshape",
    "slice_", "concat", "tile_to_map", "matmul", "linear", "conv2d",
    "kpn_apply", "normalize_kernels", "pad_replicate", "upsample_nearest2x", "avgpool2x2",
    "adaptive_avg_pool2d",
]
