"""Graph convolution layers: BlockGC and the vanilla / DecouplingGC baselines.

For input channel ``d`` in group ``k`` the aggregation matrix is
``A_k + B (+ B[..., d]) + C[..., d]``. After aggregation the channels are
projected: block-diagonally with one ``W_k`` per group (``block``), with
one full matrix (``vanilla`` with K=1, ``decoupling`` with any K).
No activation is applied here.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .errors import DimensionError, MissingStateError
from .graph import Skeleton, bone_adjacency

VARIANTS = ("block", "vanilla", "decoupling")
ADJ_INITS = ("physical", "identity", "ones", "kaiming")


def init_adjacency(mode: str, skeleton: Skeleton, groups: int, rng: np.random.Generator) -> np.ndarray:
    """Initial ``A`` of shape (K, V, V) for one of the four initialization modes."""
    v = skeleton.num_joints
    if mode == "physical":
        a = bone_adjacency(skeleton, normalize=True)
    elif mode == "identity":
        a = np.eye(v)
    elif mode == "ones":
        # degree-normalized like the physical graph, which for a complete graph is ones / V
        a = np.full((v, v), 1.0 / v)
    elif mode == "kaiming":
        bound = 1.0 / np.sqrt(v)
        return rng.uniform(-bound, bound, (groups, v, v))
    else:
        raise ValueError(f"unknown adjacency init {mode!r}; choose from {ADJ_INITS}")
    return np.repeat(a[None], groups, axis=0)


def projection_params(d_in: int, d_out: int, groups: int, variant: str) -> int:
    if variant == "block":
        return d_in * d_out // groups
    return d_in * d_out


class BlockGC:
    def __init__(self, d_in: int, d_out: int, num_joints: int, groups: int = 1,
                 variant: str = "block", adjacency: np.ndarray | None = None,
                 rng: np.random.Generator | None = None, bias: bool = True):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if variant == "vanilla" and groups != 1:
            raise ValueError("vanilla GC has a single group")
        if d_in % groups or d_out % groups:
            raise DimensionError(f"channels {d_in}->{d_out} not divisible by K={groups}")
        rng = rng or np.random.default_rng(0)
        self.d_in, self.d_out, self.groups, self.variant = d_in, d_out, groups, variant
        self.num_joints = num_joints
        if adjacency is None:
            adjacency = np.repeat(np.eye(num_joints)[None], groups, axis=0)
        adjacency = np.array(adjacency, dtype=np.float64)
        if adjacency.ndim == 2:
            adjacency = np.repeat(adjacency[None], groups, axis=0)
        if adjacency.shape != (groups, num_joints, num_joints):
            raise DimensionError(f"adjacency must be ({groups}, {num_joints}, {num_joints})")
        if variant == "decoupling":
            bound = 1.0 / np.sqrt(d_in)
            w = rng.uniform(-bound, bound, (d_in, d_out))
        else:
            ci, co = d_in // groups, d_out // groups
            bound = 1.0 / np.sqrt(ci)
            w = rng.uniform(-bound, bound, (groups, ci, co))
        self.params = {"A": adjacency, "W": w}
        if bias:
            self.params["bias"] = np.zeros(d_out)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._cache = None

    def aggregation_matrix(self, b=None, c=None) -> np.ndarray:
        """Per-channel matrix of shape (1 or N, V, V, D_in)."""
        a = np.repeat(self.params["A"], self.d_in // self.groups, axis=0)
        m = a.transpose(1, 2, 0)[None]
        if b is not None:
            m = m + (b[None, :, :, None] if b.ndim == 2 else b[None])
        if c is not None:
            m = m + c
        return np.ascontiguousarray(m)

    def _project(self, agg):
        w = self.params["W"]
        if self.variant == "decoupling":
            out = agg @ w
        else:
            k, ci, co = w.shape
            lead = agg.shape[:-1]
            grouped = agg.reshape(-1, k, ci).transpose(1, 0, 2)
            out = (grouped @ w).transpose(1, 0, 2).reshape(lead + (k * co,))
        if "bias" in self.params:
            out = out + self.params["bias"]
        return out

    def forward(self, h: np.ndarray, b: np.ndarray | None = None, c: np.ndarray | None = None) -> np.ndarray:
        """``h`` is (N, V, T, D_in) or a single (V, T, D_in) sample."""
        single = h.ndim == 3
        if single:
            h = h[None]
            c = None if c is None else c[None]
        n, v, t, d = h.shape
        if v != self.num_joints or d != self.d_in:
            raise DimensionError(f"expected (*, {self.num_joints}, T, {self.d_in}), got {h.shape}")
        if c is not None and c.shape != (n, v, v, d):
            raise DimensionError(f"C must be ({n}, {v}, {v}, {d}), got {c.shape}")
        if b is not None and b.shape not in ((v, v), (v, v, d)):
            raise DimensionError(f"B must be ({v}, {v}) or ({v}, {v}, {d}), got {b.shape}")
        m = self.aggregation_matrix(b, c)
        agg = kernels.aggregate(m, h)
        out = self._project(agg)
        self._cache = (h, m, agg, b is not None and b.ndim == 2, c is not None, single)
        return out[0] if single else out

    def backward(self, grad_out: np.ndarray):
        """Accumulate parameter grads; return ``(grad_h, grad_b, grad_c)``."""
        if self._cache is None:
            raise MissingStateError("BlockGC.backward before forward")
        h, m, agg, b_shared, has_c, single = self._cache
        if single:
            grad_out = grad_out[None]
        g, w = self.grads, self.params["W"]
        if "bias" in g:
            g["bias"] += grad_out.sum(axis=(0, 1, 2))
        flat_out = grad_out.reshape(-1, self.d_out)
        flat_agg = agg.reshape(-1, self.d_in)
        if self.variant == "decoupling":
            g["W"] += flat_agg.T @ flat_out
            g_agg = flat_out @ w.T
        else:
            k, ci, co = w.shape
            ga = flat_agg.reshape(-1, k, ci).transpose(1, 0, 2)
            go = flat_out.reshape(-1, k, co).transpose(1, 0, 2)
            g["W"] += ga.transpose(0, 2, 1) @ go
            g_agg = (go @ w.transpose(0, 2, 1)).transpose(1, 0, 2).reshape(-1, self.d_in)
        g_agg = g_agg.reshape(h.shape)
        g_m, g_h = kernels.aggregate_backward(m, h, g_agg)
        g_m_sum = g_m.sum(axis=0)
        k = self.groups
        v = self.num_joints
        g["A"] += g_m_sum.reshape(v, v, k, self.d_in // k).sum(axis=-1).transpose(2, 0, 1)
        grad_b = g_m_sum.sum(axis=-1) if b_shared else g_m_sum
        grad_c = g_m if has_c else None
        if single:
            return g_h[0], grad_b, None if grad_c is None else grad_c[0]
        return g_h, grad_b, grad_c

    def param_count(self) -> dict:
        proj = projection_params(self.d_in, self.d_out, self.groups, self.variant)
        adj = self.groups * self.num_joints ** 2
        bias = self.d_out if "bias" in self.params else 0
        return {"projection": proj, "adjacency": adj, "bias": bias, "total": proj + adj + bias}

    def flop_count(self, frames: int) -> dict:
        """Multiply-accumulate counts for one sample of ``frames`` frames."""
        v = self.num_joints
        proj = frames * v * projection_params(self.d_in, self.d_out, self.groups, self.variant)
        agg = frames * v * v * self.d_in
        return {"projection": proj, "aggregation": agg, "total": proj + agg}


def param_count(layer: BlockGC) -> dict:
    return layer.param_count()


def flop_count(layer: BlockGC, frames: int) -> dict:
    return layer.flop_count(frames)
