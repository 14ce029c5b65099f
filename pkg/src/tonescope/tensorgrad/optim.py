"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

from typing import Dict, Optional

import numpy as np

from ..errors import NonFiniteError
from .tensor import Tensor


class Adam:
    def __init__(self, params: Dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.998, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise NonFiniteError("non-finite gradient for parameter %r" % name)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            step = (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
            # out-of-place so live views of the old value stay valid
            p.data = (p.data - step).astype(p.data.dtype, copy=False)
            if not np.all(np.isfinite(p.data)):
                raise NonFiniteError("non-finite update for parameter %r" % name)

    def state_arrays(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {"step": np.array([self.t], dtype=np.int64)}
        for name in self.params:
            out["m." + name] = self.m[name]
            out["v." + name] = self.v[name]
        return out

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        self.t = int(arrays["step"][0])
        for name in self.params:
            self.m[name] = np.array(arrays["m." + name], copy=True)
            self.v[name] = np.array(arrays["v." + name], copy=True)
