"""Backend selection for the hot kernels.

The compiled extension is preferred when importable; the numpy fallback is
always available. TONESCOPE_PURE_PYTHON=1 forces the fallback at import
time, and set_backend() switches at runtime (used by the parity tests and
the benchmark). Both backends are bit-identical by construction.
"""

from __future__ import annotations

import os

from . import numpy_backend

try:
    from . import _cykernels
    HAVE_COMPILED = True
except ImportError:
    _cykernels = None
    HAVE_COMPILED = False

_BACKENDS = {"numpy": numpy_backend}
if HAVE_COMPILED:
    _BACKENDS["cython"] = _cykernels

if os.environ.get("TONESCOPE_PURE_PYTHON") == "1" or not HAVE_COMPILED:
    _active = numpy_backend
else:
    _active = _cykernels


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError("unknown backend %r (have: %s)" %
                         (name, ", ".join(sorted(_BACKENDS))))
    _active = _BACKENDS[name]


def get_backend(name: str | None = None):
    if name is None:
        return _active
    if name not in _BACKENDS:
        raise ValueError("unknown backend %r (have: %s)" %
                         (name, ", ".join(sorted(_BACKENDS))))
    return _BACKENDS[name]


def backend_name() -> str:
    return _active.NAME


def available_backends() -> list[str]:
    return sorted(_BACKENDS)
