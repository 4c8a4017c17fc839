"""Multi-scale temporal convolution over (N, V, T, D) features.

Each branch reduces channels with a 1x1 convolution and then optionally
applies a dilated temporal convolution or a max-pool. Branch outputs are
concatenated along channels. Joints never mix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, MissingStateError, ShapeError
from .tensor import conv_time, conv_time_backward, maxpool_time, maxpool_time_backward


@dataclass(frozen=True)
class Branch:
    kind: str = "conv"      # "conv", "pool" or "none"
    kernel: int = 1
    dilation: int = 1

    def __post_init__(self):
        if self.kind not in ("conv", "pool", "none"):
            raise ValueError(f"unknown branch kind {self.kind!r}")
        if self.kind != "none" and self.kernel % 2 == 0:
            raise ValueError("same padding needs an odd kernel")

    @property
    def padding(self) -> int:
        return self.dilation * (self.kernel - 1) // 2


DEFAULT_BRANCHES = (Branch("conv", 5, 1), Branch("conv", 5, 2), Branch("none"))


def split_channels(d_out: int, n_branches: int) -> list[int]:
    """Equal split; the last branch takes the remainder."""
    c = d_out // n_branches
    if c < 1:
        raise DimensionError(f"{d_out} channels cannot feed {n_branches} branches")
    return [c] * (n_branches - 1) + [d_out - c * (n_branches - 1)]


class MSTC:
    def __init__(self, d_in: int, d_out: int, stride: int = 1,
                 branches: tuple[Branch, ...] = DEFAULT_BRANCHES,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.d_in, self.d_out, self.stride = d_in, d_out, stride
        self.branches = tuple(branches)
        self.widths = split_channels(d_out, len(self.branches))
        self.params: dict[str, np.ndarray] = {}
        for i, (br, c) in enumerate(zip(self.branches, self.widths)):
            bound = 1.0 / np.sqrt(d_in)
            self.params[f"b{i}.reduce_w"] = rng.uniform(-bound, bound, (d_in, c))
            self.params[f"b{i}.reduce_b"] = rng.uniform(-bound, bound, c)
            if br.kind == "conv":
                bound = 1.0 / np.sqrt(c * br.kernel)
                self.params[f"b{i}.conv_w"] = rng.uniform(-bound, bound, (c, c, br.kernel))
                self.params[f"b{i}.conv_b"] = rng.uniform(-bound, bound, c)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._cache = None

    def output_length(self, t: int) -> int:
        return (t - 1) // self.stride + 1

    def forward(self, h: np.ndarray) -> np.ndarray:
        """``h`` is (N, V, T, D_in) or (V, T, D_in); returns (..., V, T', D_out)."""
        single = h.ndim == 3
        if single:
            h = h[None]
        n, v, t, d = h.shape
        if d != self.d_in:
            raise DimensionError(f"expected {self.d_in} channels, got {d}")
        x = h.reshape(n * v, t, d)
        t_out = self.output_length(t)
        outs, caches = [], []
        for i, br in enumerate(self.branches):
            p = self.params
            if br.kind == "none":
                xs = x[:, ::self.stride, :]
                y = xs @ p[f"b{i}.reduce_w"] + p[f"b{i}.reduce_b"]
                caches.append((xs, None, None))
            else:
                if t + 2 * br.padding < br.dilation * (br.kernel - 1) + 1:
                    raise ShapeError(f"T={t} too short for branch {i}")
                r = x @ p[f"b{i}.reduce_w"] + p[f"b{i}.reduce_b"]
                if br.kind == "conv":
                    y = conv_time(r, p[f"b{i}.conv_w"], self.stride, br.dilation, br.padding) + p[f"b{i}.conv_b"]
                    caches.append((x, r, None))
                else:
                    y, idx = maxpool_time(r, br.kernel, self.stride, br.padding)
                    caches.append((x, r, idx))
            if y.shape[1] != t_out:
                raise ShapeError("branch output lengths disagree")
            outs.append(y)
        out = np.concatenate(outs, axis=-1).reshape(n, v, t_out, self.d_out)
        self._cache = (h.shape, caches, single)
        return out[0] if single else out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise MissingStateError("MSTC.backward before forward")
        shape, caches, single = self._cache
        if single:
            grad_out = grad_out[None]
        n, v, t, d = shape
        g_all = grad_out.reshape(n * v, -1, self.d_out)
        gx = np.zeros((n * v, t, d))
        p, g = self.params, self.grads
        start = 0
        for i, (br, c) in enumerate(zip(self.branches, self.widths)):
            gy = g_all[:, :, start:start + c]
            start += c
            x, r, idx = caches[i]
            if br.kind == "none":
                g[f"b{i}.reduce_w"] += x.reshape(-1, d).T @ gy.reshape(-1, c)
                g[f"b{i}.reduce_b"] += gy.sum(axis=(0, 1))
                gx[:, ::self.stride, :] += gy @ p[f"b{i}.reduce_w"].T
                continue
            if br.kind == "conv":
                g[f"b{i}.conv_b"] += gy.sum(axis=(0, 1))
                gr, gk = conv_time_backward(r, p[f"b{i}.conv_w"], gy, self.stride, br.dilation, br.padding)
                g[f"b{i}.conv_w"] += gk
            else:
                gr = maxpool_time_backward(r.shape, idx, gy, br.kernel, self.stride, br.padding)
            g[f"b{i}.reduce_w"] += x.reshape(-1, d).T @ gr.reshape(-1, c)
            g[f"b{i}.reduce_b"] += gr.sum(axis=(0, 1))
            gx += gr @ p[f"b{i}.reduce_w"].T
        gx = gx.reshape(shape)
        return gx[0] if single else gx

    def param_count(self) -> int:
        return sum(x.size for x in self.params.values())
