"""Dense float64 array primitives with explicit forward/backward pairs.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 (C order).
Every differentiable primitive here comes as ``op`` plus ``op_backward``;
there is no tape. Randomness is drawn from a single
``numpy.random.Generator`` backed by PCG64 (see :func:`make_rng`).
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import DimensionError, FormatError, NumericError, ShapeError, TruncatedFileError

RNG_ALGORITHM = "PCG64"
RNG_VERSION = 1


def make_rng(seed: int) -> np.random.Generator:
    """Return the package's generator: PCG64 seeded with ``seed``.

    PCG64 is a documented, platform-independent 128-bit LCG with a
    permuted output; numpy guarantees its raw bit stream is stable.
    """
    return np.random.Generator(np.random.PCG64(seed))


def as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{what} contains non-finite values")
    return x


# -- matmul -----------------------------------------------------------------

def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def matmul_backward(a: np.ndarray, b: np.ndarray, grad_out: np.ndarray):
    return grad_out @ b.T, a.T @ grad_out


# -- elementwise ------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def add_broadcast_backward(grad_out: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce ``grad_out`` back to ``shape`` after a broadcasting add/mul."""
    g = grad_out
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a * b


def mul_backward(a: np.ndarray, b: np.ndarray, grad_out: np.ndarray):
    return (add_broadcast_backward(grad_out * b, a.shape),
            add_broadcast_backward(grad_out * a, b.shape))


# -- softmax / loss ---------------------------------------------------------

def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Loss ``-log softmax(logits)[label]`` and its gradient w.r.t. ``logits``."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[-1]:
        raise IndexError(f"label {label} out of range for {logits.shape[-1]} classes")
    loss = -log_softmax(logits)[label]
    grad = softmax(logits)
    grad[label] -= 1.0
    return float(loss), grad


def cross_entropy_batch(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over rows of ``logits`` (N, C); gradient has the same shape."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise DimensionError("one label per row required")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise IndexError("label out of range")
    rows = np.arange(n)
    loss = -log_softmax(logits)[rows, labels].mean()
    grad = softmax(logits)
    grad[rows, labels] -= 1.0
    return float(loss), grad / n


# -- temporal convolution ---------------------------------------------------

def conv_output_length(t: int, k: int, stride: int, dilation: int, padding: int) -> int:
    return (t + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def _conv_check(t, k, stride, dilation, padding):
    if k < 1 or stride < 1 or dilation < 1 or padding < 0:
        raise ShapeError("kernel, stride and dilation must be >= 1, padding >= 0")
    t_out = conv_output_length(t, k, stride, dilation, padding)
    if t_out < 1:
        raise ShapeError(f"sequence of length {t} too short for kernel {k} at dilation {dilation}")
    return t_out


def _im2col(x, k, stride, dilation, padding, t_out):
    # x: (M, T, C) -> (M, T_out, k, C)
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (0, 0)))
    span = stride * (t_out - 1) + 1
    return np.stack([x[:, j * dilation:j * dilation + span:stride, :] for j in range(k)], axis=2)


def conv_time(x: np.ndarray, kernel: np.ndarray, stride: int = 1, dilation: int = 1,
              padding: int = 0) -> np.ndarray:
    """Batched dilated cross-correlation along axis 1.

    ``x`` is (M, T, C_in), ``kernel`` is (C_out, C_in, k); returns (M, T', C_out).
    """
    m, t, c_in = x.shape
    c_out, kc_in, k = kernel.shape
    if kc_in != c_in:
        raise DimensionError(f"kernel expects {kc_in} input channels, got {c_in}")
    t_out = _conv_check(t, k, stride, dilation, padding)
    cols = _im2col(x, k, stride, dilation, padding, t_out)
    out = cols.reshape(m * t_out, k * c_in) @ kernel.transpose(2, 1, 0).reshape(k * c_in, c_out)
    return out.reshape(m, t_out, c_out)


def conv_time_backward(x: np.ndarray, kernel: np.ndarray, grad_out: np.ndarray, stride: int = 1,
                       dilation: int = 1, padding: int = 0):
    m, t, c_in = x.shape
    c_out, _, k = kernel.shape
    t_out = grad_out.shape[1]
    cols = _im2col(x, k, stride, dilation, padding, t_out).reshape(m * t_out, k * c_in)
    g2 = grad_out.reshape(m * t_out, c_out)
    g_kernel = (cols.T @ g2).reshape(k, c_in, c_out).transpose(2, 1, 0)
    g_cols = (g2 @ kernel.transpose(2, 1, 0).reshape(k * c_in, c_out).T).reshape(m, t_out, k, c_in)
    g_pad = np.zeros((m, t + 2 * padding, c_in))
    span = stride * (t_out - 1) + 1
    for j in range(k):
        g_pad[:, j * dilation:j * dilation + span:stride, :] += g_cols[:, :, j, :]
    return g_pad[:, padding:padding + t, :], np.ascontiguousarray(g_kernel)


def conv1d_temporal(x: np.ndarray, kernel: np.ndarray, stride: int = 1, dilation: int = 1,
                    padding: int = 0) -> np.ndarray:
    """Single-sequence convolution: ``x`` (D_in, T), ``kernel`` (D_out, D_in, k) -> (D_out, T')."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError("x must be (D_in, T)")
    return conv_time(x.T[None], as_tensor(kernel), stride, dilation, padding)[0].T


def conv1d_temporal_backward(x, kernel, grad_out, stride=1, dilation=1, padding=0):
    gx, gk = conv_time_backward(as_tensor(x).T[None], as_tensor(kernel),
                                as_tensor(grad_out).T[None], stride, dilation, padding)
    return gx[0].T, gk


def maxpool_time(x: np.ndarray, k: int, stride: int = 1, padding: int = 0):
    """Max-pool over axis 1 of (M, T, C) with -inf padding; returns (out, argmax)."""
    m, t, c = x.shape
    t_out = _conv_check(t, k, stride, 1, padding)
    xp = np.pad(x, ((0, 0), (padding, padding), (0, 0)), constant_values=-np.inf) if padding else x
    cols = _im2col(xp, k, stride, 1, 0, t_out)
    idx = cols.argmax(axis=2)
    out = np.take_along_axis(cols, idx[:, :, None, :], axis=2)[:, :, 0, :]
    return out, idx


def maxpool_time_backward(x_shape, idx, grad_out, k, stride=1, padding=0):
    m, t, c = x_shape
    t_out = grad_out.shape[1]
    g_pad = np.zeros((m, t + 2 * padding, c))
    src = np.arange(t_out)[None, :, None] * stride + idx
    mi = np.arange(m)[:, None, None]
    ci = np.arange(c)[None, None, :]
    np.add.at(g_pad, (np.broadcast_to(mi, src.shape), src, np.broadcast_to(ci, src.shape)), grad_out)
    return g_pad[:, padding:padding + t, :]


# -- gradient checking ------------------------------------------------------

@dataclass
class GradcheckReport:
    max_rel_err: float
    max_abs_err: float
    worst: tuple
    n_checked: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} max_rel_err={self.max_rel_err:.3e} max_abs_err={self.max_abs_err:.3e} "
                f"checked={self.n_checked} worst={self.worst}")


def gradcheck(f: Callable[..., float], params, analytic, eps: float = 1e-5, tol: float = 1e-4,
              floor: float = 1e-6) -> GradcheckReport:
    """Compare ``analytic`` gradients with central differences of ``f``.

    ``params`` is an array or a mapping name -> array; entries are perturbed in
    place and restored, then ``f(params)`` is evaluated. ``analytic`` mirrors
    the structure of ``params``. The relative error of one entry is
    ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps entries whose true
    gradient is zero from being judged on roundoff alone.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    arg = params
    if not isinstance(params, Mapping):
        params, analytic = {"p": params}, {"p": analytic}
    worst, max_rel, max_abs, n = (), 0.0, 0.0, 0
    for name, p in params.items():
        a = np.asarray(analytic[name], dtype=np.float64)
        if a.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {a.shape}, expected {p.shape}")
        check_finite(a, f"analytic gradient of {name}")
        flat = p.reshape(-1)
        if not np.shares_memory(flat, p):
            raise ValueError(f"parameter {name} must be contiguous to perturb in place")
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            fp = f(arg)
            flat[i] = old - eps
            fm = f(arg)
            flat[i] = old
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(f"non-finite loss while perturbing {name}[{i}]")
            num = (fp - fm) / (2 * eps)
            ai = a.reshape(-1)[i]
            err = abs(ai - num)
            rel = err / max(abs(ai), abs(num), floor)
            n += 1
            max_abs = max(max_abs, err)
            if rel > max_rel:
                max_rel, worst = rel, (name, np.unravel_index(i, p.shape), float(ai), float(num))
    return GradcheckReport(max_rel, max_abs, worst, n, tol)


# -- dump format ------------------------------------------------------------
# little-endian: ndim:int32, shape:int32[ndim], data:float64[prod(shape)]

def dump_tensor(x: np.ndarray) -> bytes:
    x = np.asarray(x, dtype="<f8")
    header = struct.pack(f"<i{x.ndim}i", x.ndim, *x.shape)
    return header + np.ascontiguousarray(x).tobytes()


def read_tensor(stream: io.BufferedIOBase) -> np.ndarray:
    head = stream.read(4)
    if len(head) < 4:
        raise TruncatedFileError("missing tensor header")
    (ndim,) = struct.unpack("<i", head)
    if ndim < 0 or ndim > 32:
        raise FormatError(f"implausible ndim {ndim}")
    raw = stream.read(4 * ndim)
    if len(raw) < 4 * ndim:
        raise TruncatedFileError("truncated tensor shape")
    shape = struct.unpack(f"<{ndim}i", raw)
    if any(s < 0 for s in shape):
        raise FormatError(f"negative dimension in {shape}")
    count = int(np.prod(shape, dtype=np.int64))
    payload = stream.read(8 * count)
    if len(payload) < 8 * count:
        raise TruncatedFileError("truncated tensor payload")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)


def load_tensor(data: bytes) -> np.ndarray:
    return read_tensor(io.BytesIO(data))
