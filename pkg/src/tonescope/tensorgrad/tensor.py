"""Tensor and tape for reverse-mode automatic differentiation.

Storage is a numpy array (float32 by default, float64 for gradient
checking). Each op records its parents and one vector-Jacobian closure per
parent; backward() topologically orders the reachable subgraph and pushes
gradients root-to-leaves, accumulating on fan-out.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import NonFiniteError, ShapeError

FLOAT_DTYPES = (np.float32, np.float64)
DEFAULT_DTYPE = np.float32

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        self._prev = grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_vjps", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None,
                 name: Optional[str] = None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        # ascontiguousarray promotes 0-d to 1-d; keep scalars 0-d
        self.data = arr if arr.ndim == 0 else np.ascontiguousarray(arr)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple = ()
        self._vjps: tuple = ()
        self._op: str = "leaf"

    # -- construction used by ops ------------------------------------
    @staticmethod
    def _result(data: np.ndarray, op: str, parents: Sequence["Tensor"],
                vjps: Sequence[Optional[Callable]]) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.name = None
        out._op = op
        if grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._vjps = tuple(vjps)
        else:
            out.requires_grad = False
            out._parents = ()
            out._vjps = ()
        return out

    # -- basic properties ---------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item() needs a single-element tensor, got shape %s"
                             % (self.shape,))
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def check_finite(self, name: Optional[str] = None) -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            label = name or self.name or self._op
            raise NonFiniteError("non-finite values in tensor %r" % label)
        return self

    # -- autodiff -------------------------------------------------------
    def backward(self, grad=None) -> None:
        Tape(self).backward(grad)

    # -- operator sugar (implemented in ops, bound late) ----------------
    def __repr__(self) -> str:
        return "Tensor(op=%s, shape=%s, dtype=%s, requires_grad=%s)" % (
            self._op, self.shape, self.data.dtype.name, self.requires_grad)


class Tape:
    """Topologically ordered record of the ops reachable from a root.

    nodes[i] appears after every tensor it depends on; backward() walks the
    list in reverse, so each node's gradient is complete before it is
    propagated to its parents.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

    def backward(self, grad=None) -> None:
        root = self.root
        if not root.requires_grad:
            raise ValueError("backward() on a tensor that does not require grad")
        if grad is None:
            if root.data.size != 1:
                raise ShapeError(
                    "backward() without an explicit gradient needs a scalar "
                    "root, got shape %s" % (root.shape,))
            grad = np.ones_like(root.data)
        else:
            grad = np.asarray(grad, dtype=root.data.dtype)
            if grad.shape != root.data.shape:
                raise ShapeError("gradient shape %s does not match root shape %s"
                                 % (grad.shape, root.data.shape))
        root.grad = grad if root.grad is None else root.grad + grad
        for node in reversed(self.nodes):
            if node.grad is None or not node._parents:
                continue
            for parent, vjp in zip(node._parents, node._vjps):
                if vjp is None or not parent.requires_grad:
                    continue
                g = vjp(node.grad)
                if g.shape != parent.data.shape:
                    raise ShapeError(
                        "vjp of %s produced gradient shape %s for parent "
                        "shape %s" % (node._op, g.shape, parent.data.shape))
                parent.grad = g if parent.grad is None else parent.grad + g


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def constant(x, dtype=None) -> Tensor:
    return Tensor(np.asarray(x, dtype=dtype or DEFAULT_DTYPE), requires_grad=False)


def parameter(x, name: Optional[str] = None, dtype=None) -> Tensor:
    return Tensor(np.asarray(x, dtype=dtype or DEFAULT_DTYPE),
                  requires_grad=True, name=name)


def iter_unique(tensors: Iterable[Tensor]) -> list[Tensor]:
    seen: set[int] = set()
    out = []
    for t in tensors:
        if id(t) not in seen:
            seen.add(id(t))
            out.append(t)
    return out
