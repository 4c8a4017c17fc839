"""Topological (graph-distance) and statistical (mean relative pose) encodings.

Both produce an additive term for the per-layer aggregation matrix:
``B`` is looked up from a learnable table indexed by graph distance and
``C`` comes from a small MLP applied to the temporal mean of the relative
coordinates of every joint pair.
"""
from __future__ import annotations

import numpy as np

from .errors import MissingStateError, ShapeError
from .graph import DistanceMatrix
from .tensor import relu

SHARED = "shared"
FEATURE_WISE = "feature_wise"
MODES = (SHARED, FEATURE_WISE)


def _row_normalize(x: np.ndarray):
    # rows run along axis 1; sorting the squares makes the norm independent of joint order
    norm = np.sqrt(np.sort(x * x, axis=1).sum(axis=1, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    return x / safe, norm, safe


def build_B(table: np.ndarray, d: DistanceMatrix | np.ndarray, l2_normalize: bool = False) -> np.ndarray:
    """``B[i, j] = table[d[i, j]]``; ``table`` is (L,) or (L, D) giving (V, V) or (V, V, D).

    With ``l2_normalize`` each row (per channel) is scaled to unit L2 norm;
    all-zero rows are left untouched.
    """
    idx = d.d if isinstance(d, DistanceMatrix) else np.asarray(d)
    if idx.max() >= table.shape[0]:
        raise IndexError(f"distance {idx.max()} exceeds table of length {table.shape[0]}")
    b = table[idx]
    if l2_normalize:
        b = _row_normalize(b)[0]
    return b


def build_B_backward(table: np.ndarray, d: DistanceMatrix | np.ndarray, grad_b: np.ndarray,
                     l2_normalize: bool = False) -> np.ndarray:
    """Gradient w.r.t. ``table``. Zero rows are treated as the identity map."""
    idx = d.d if isinstance(d, DistanceMatrix) else np.asarray(d)
    if l2_normalize:
        y, norm, safe = _row_normalize(table[idx])
        g = (grad_b - y * (y * grad_b).sum(axis=1, keepdims=True)) / safe
        grad_b = np.where(norm > 0, g, grad_b)
    flat = idx.reshape(-1)
    n = table.shape[0]
    if table.ndim == 1:
        return np.bincount(flat, weights=grad_b.reshape(-1), minlength=n)
    out = np.zeros_like(table)
    np.add.at(out, flat, grad_b.reshape(flat.size, -1))
    return out


class TopoEncoding:
    """Learnable table ``E`` of per-distance weights, shared or one per channel."""

    def __init__(self, dist: DistanceMatrix, channels: int, mode: str = SHARED,
                 l2_normalize: bool = True):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.dist = dist
        self.mode = mode
        self.l2_normalize = l2_normalize
        length = dist.max + 1
        shape = (length,) if mode == SHARED else (length, channels)
        self.params = {"table": np.zeros(shape)}
        self.grads = {"table": np.zeros(shape)}

    def forward(self) -> np.ndarray:
        return build_B(self.params["table"], self.dist, self.l2_normalize)

    def backward(self, grad_b: np.ndarray) -> None:
        self.grads["table"] += build_B_backward(self.params["table"], self.dist, grad_b,
                                                self.l2_normalize)


def temporal_mean_relative(seq: np.ndarray) -> np.ndarray:
    """Mean over time of ``x_i - x_j``: (T, V, 3) -> (V, V, 3), or batched (N, T, V, 3).

    Differences are taken per frame before averaging so the result is exactly
    invariant to any translation that is itself exactly representable.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.shape[-3] == 0:
        raise ShapeError("sequence has no frames")
    rel = seq[..., :, None, :] - seq[..., None, :, :]
    return rel.mean(axis=-4)


class StatEncoding:
    """Two-layer MLP ``R^3 -> R^h -> R^D`` mapping mean relative coordinates to ``C``.

    The output layer starts at zero so ``C`` is zero at init, like the
    topological table.
    """

    def __init__(self, channels: int, hidden: int = 64, mode: str = FEATURE_WISE,
                 rng: np.random.Generator | None = None):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        rng = rng or np.random.default_rng(0)
        self.channels = channels
        self.mode = mode
        d_out = channels if mode == FEATURE_WISE else 1
        b1 = 1.0 / np.sqrt(3)
        self.params = {
            "w1": rng.uniform(-b1, b1, (3, hidden)),
            "b1": rng.uniform(-b1, b1, hidden),
            "w2": np.zeros((hidden, d_out)),
            "b2": np.zeros(d_out),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._cache = None

    def forward(self, rbar: np.ndarray) -> np.ndarray:
        p = self.params
        pre = rbar @ p["w1"] + p["b1"]
        hid = relu(pre)
        out = hid @ p["w2"] + p["b2"]
        self._cache = (rbar, pre, hid)
        if self.mode == SHARED:
            out = np.broadcast_to(out, out.shape[:-1] + (self.channels,))
        return out

    def backward(self, grad_c: np.ndarray) -> None:
        if self._cache is None:
            raise MissingStateError("StatEncoding.backward before forward")
        rbar, pre, hid = self._cache
        p, g = self.params, self.grads
        if self.mode == SHARED:
            grad_c = grad_c.sum(axis=-1, keepdims=True)
        go = grad_c.reshape(-1, grad_c.shape[-1])
        h2 = hid.reshape(-1, hid.shape[-1])
        g["w2"] += h2.T @ go
        g["b2"] += go.sum(axis=0)
        gh = (go @ p["w2"].T) * (pre.reshape(h2.shape) > 0)
        g["w1"] += rbar.reshape(-1, 3).T @ gh
        g["b1"] += gh.sum(axis=0)


def build_C(enc: StatEncoding, rbar: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(enc.forward(rbar))
