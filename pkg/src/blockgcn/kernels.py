"""Backend selection for the hot kernels.

The compiled extension ``blockgcn._ckernels`` is used when it imports;
otherwise the numpy fallback in ``blockgcn._kernels_py``. Setting
``BLOCKGCN_BACKEND=python`` forces the fallback, ``=compiled`` makes a
missing extension an import error.
"""
import os

import numpy as np

from . import _kernels_py
from .errors import DimensionError

_requested = os.environ.get("BLOCKGCN_BACKEND", "auto").lower()

if _requested == "python":
    _impl = _kernels_py
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "compiled"


def _check(m, h):
    if m.ndim != 4 or h.ndim != 4:
        raise DimensionError("aggregate expects M (N,V,V,D) and H (N,V,T,D)")
    if m.shape[0] not in (1, h.shape[0]) or m.shape[2] != h.shape[1] or m.shape[3] != h.shape[3]:
        raise DimensionError(f"aggregation matrix {m.shape} incompatible with features {h.shape}")


def aggregate(m: np.ndarray, h: np.ndarray, impl=None) -> np.ndarray:
    """``out[n, v, t, d] = sum_u m[n, v, u, d] * h[n, u, t, d]``."""
    _check(m, h)
    return (impl or _impl).aggregate(np.ascontiguousarray(m, dtype=np.float64),
                                     np.ascontiguousarray(h, dtype=np.float64))


def aggregate_backward(m: np.ndarray, h: np.ndarray, g: np.ndarray, impl=None):
    """Gradients of :func:`aggregate` w.r.t. ``m`` and ``h`` given upstream ``g``."""
    _check(m, h)
    c = np.ascontiguousarray
    return (impl or _impl).aggregate_backward(c(m, dtype=np.float64), c(h, dtype=np.float64),
                                              c(g, dtype=np.float64))
