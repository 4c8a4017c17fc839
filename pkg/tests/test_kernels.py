import os
import subprocess
import sys

import numpy as np
import pytest

from blockgcn import _kernels_py, kernels
from blockgcn.errors import DimensionError

try:
    from blockgcn import _ckernels
except ImportError:
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


def loop_aggregate(m, h):
    n, v, t, d = h.shape
    out = np.zeros_like(h)
    for b in range(n):
        mb = m[b if m.shape[0] > 1 else 0]
        for i in range(v):
            for u in range(v):
                out[b, i] += mb[i, u][None, :] * h[b, u]
    return out


@pytest.mark.parametrize("shared", [False, True])
def test_python_backend_matches_loops(rng, shared):
    h = rng.normal(size=(3, 4, 5, 6))
    m = rng.normal(size=(1 if shared else 3, 4, 4, 6))
    np.testing.assert_allclose(kernels.aggregate(m, h, _kernels_py), loop_aggregate(m, h), atol=1e-12)


@needs_ext
@pytest.mark.parametrize("shared", [False, True])
def test_backends_agree(rng, shared):
    h = rng.normal(size=(3, 7, 5, 6))
    m = rng.normal(size=(1 if shared else 3, 7, 7, 6))
    g = rng.normal(size=h.shape)
    np.testing.assert_allclose(kernels.aggregate(m, h, _ckernels), kernels.aggregate(m, h, _kernels_py),
                               rtol=0, atol=1e-12)
    for a, b in zip(kernels.aggregate_backward(m, h, g, _ckernels),
                    kernels.aggregate_backward(m, h, g, _kernels_py)):
        assert a.shape == b.shape
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_backward_is_adjoint(rng):
    h = rng.normal(size=(2, 4, 3, 5))
    m = rng.normal(size=(2, 4, 4, 5))
    g = rng.normal(size=h.shape)
    gm, gh = kernels.aggregate_backward(m, h, g)
    eps = 1e-6
    dm, dh = rng.normal(size=m.shape), rng.normal(size=h.shape)
    fd = (np.sum(kernels.aggregate(m + eps * dm, h + eps * dh) * g)
          - np.sum(kernels.aggregate(m - eps * dm, h - eps * dh) * g)) / (2 * eps)
    assert fd == pytest.approx(np.sum(gm * dm) + np.sum(gh * dh), rel=1e-7)


def test_shape_checks():
    with pytest.raises(DimensionError):
        kernels.aggregate(np.zeros((1, 3, 3, 2)), np.zeros((1, 4, 2, 2)))
    with pytest.raises(DimensionError):
        kernels.aggregate(np.zeros((2, 3, 3, 2)), np.zeros((3, 3, 2, 2)))


def test_backend_selected_by_environment():
    code = "import blockgcn.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, BLOCKGCN_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    if _ckernels is not None:
        assert kernels.BACKEND == "compiled" or os.environ.get("BLOCKGCN_BACKEND") == "python"
