"""Pure numpy implementations of the hot kernels (fallback backend).

Per-channel graph aggregation::

    out[n, v, t, d] = sum_u M[n, v, u, d] * H[n, u, t, d]

``M`` may have a leading axis of 1, meaning the same aggregation matrix for
every sample; its gradient is then summed over the batch.
"""
import numpy as np


def aggregate(m: np.ndarray, h: np.ndarray) -> np.ndarray:
    mt = m.transpose(0, 3, 1, 2)
    ht = h.transpose(0, 3, 1, 2)
    return np.ascontiguousarray((mt @ ht).transpose(0, 2, 3, 1))


def aggregate_backward(m: np.ndarray, h: np.ndarray, g: np.ndarray):
    mt = m.transpose(0, 3, 1, 2)
    ht = h.transpose(0, 3, 1, 2)
    gt = g.transpose(0, 3, 1, 2)
    gm = gt @ ht.swapaxes(-1, -2)
    if m.shape[0] == 1 and h.shape[0] != 1:
        gm = gm.sum(axis=0, keepdims=True)
    gh = mt.swapaxes(-1, -2) @ gt
    return (np.ascontiguousarray(gm.transpose(0, 2, 3, 1)),
            np.ascontiguousarray(gh.transpose(0, 2, 3, 1)))
