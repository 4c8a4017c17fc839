# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-channel graph aggregation; same contract as ``_kernels_py``."""
import numpy as np
cimport cython


def aggregate(const double[:, :, :, ::1] m, const double[:, :, :, ::1] h):
    cdef Py_ssize_t n_batch = h.shape[0], nv = m.shape[1], nu = m.shape[2]
    cdef Py_ssize_t nt = h.shape[2], nd = h.shape[3]
    cdef bint shared = m.shape[0] == 1
    out_arr = np.zeros((n_batch, nv, nt, nd))
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t n, v, u, t, d, mn
    cdef const double* mrow
    cdef const double* hrow
    cdef double* orow
    with nogil:
        for n in range(n_batch):
            mn = 0 if shared else n
            for v in range(nv):
                for u in range(nu):
                    mrow = &m[mn, v, u, 0]
                    for t in range(nt):
                        hrow = &h[n, u, t, 0]
                        orow = &out[n, v, t, 0]
                        for d in range(nd):
                            orow[d] += mrow[d] * hrow[d]
    return out_arr


def aggregate_backward(const double[:, :, :, ::1] m, const double[:, :, :, ::1] h,
                       const double[:, :, :, ::1] g):
    cdef Py_ssize_t n_batch = h.shape[0], nv = m.shape[1], nu = m.shape[2]
    cdef Py_ssize_t nt = h.shape[2], nd = h.shape[3]
    cdef bint shared = m.shape[0] == 1
    gm_arr = np.zeros((m.shape[0], nv, nu, nd))
    gh_arr = np.zeros((n_batch, nu, nt, nd))
    cdef double[:, :, :, ::1] gm = gm_arr
    cdef double[:, :, :, ::1] gh = gh_arr
    cdef Py_ssize_t n, v, u, t, d, mn
    cdef const double* mrow
    cdef const double* hrow
    cdef const double* grow
    cdef double* gmrow
    cdef double* ghrow
    with nogil:
        for n in range(n_batch):
            mn = 0 if shared else n
            for v in range(nv):
                for u in range(nu):
                    mrow = &m[mn, v, u, 0]
                    gmrow = &gm[mn, v, u, 0]
                    for t in range(nt):
                        hrow = &h[n, u, t, 0]
                        grow = &g[n, v, t, 0]
                        ghrow = &gh[n, u, t, 0]
                        for d in range(nd):
                            gmrow[d] += grow[d] * hrow[d]
                            ghrow[d] += mrow[d] * grow[d]
    return gm_arr, gh_arr
