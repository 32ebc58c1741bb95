# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the sigmoid-loss oracle hot paths.

Mirrors ``zoprox._kernels_py`` function for function. Accumulation order is
sequential over each row's nonzeros, so values computed here can differ from
the fallback in the last few ulps; each backend is internally consistent.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

cdef double MARGIN_CLAMP = 500.0


cdef inline double _sigmoid(double m) noexcept nogil:
    if m > MARGIN_CLAMP:
        m = MARGIN_CLAMP
    elif m < -MARGIN_CLAMP:
        m = -MARGIN_CLAMP
    return 1.0 / (1.0 + exp(m))


def sigmoid_loss_rows(const cnp.int64_t[::1] indptr,
                      const cnp.int64_t[::1] indices,
                      const double[::1] data,
                      const double[::1] labels,
                      const cnp.int64_t[::1] rows,
                      const double[::1] x):
    """Loss of each requested row at the point ``x``."""
    cdef Py_ssize_t k, p, i
    cdef double s
    cdef Py_ssize_t nrows = rows.shape[0]
    out_arr = np.empty(nrows, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for k in range(nrows):
            i = rows[k]
            s = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                s += data[p] * x[indices[p]]
            out[k] = _sigmoid(labels[i] * s)
    return out_arr


def sigmoid_loss_rows_shifted(const cnp.int64_t[::1] indptr,
                              const cnp.int64_t[::1] indices,
                              const double[::1] data,
                              const double[::1] labels,
                              const cnp.int64_t[::1] rows,
                              const double[::1] x,
                              const double[:, ::1] U,
                              double mu):
    """Loss of row ``rows[k]`` at the point ``x + mu * U[k]``."""
    cdef Py_ssize_t k, p, i, j
    cdef double s, y
    cdef Py_ssize_t nrows = rows.shape[0]
    out_arr = np.empty(nrows, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for k in range(nrows):
            i = rows[k]
            s = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                y = x[j] + mu * U[k, j]
                s += data[p] * y
            out[k] = _sigmoid(labels[i] * s)
    return out_arr


def sigmoid_loss_coord_stencil(const cnp.int64_t[::1] indptr,
                               const cnp.int64_t[::1] indices,
                               const double[::1] data,
                               const double[::1] labels,
                               Py_ssize_t i,
                               const double[::1] x,
                               double mu):
    """Losses of row ``i`` at ``x + mu*e_j`` and ``x - mu*e_j`` for every j."""
    cdef Py_ssize_t d = x.shape[0]
    cdef Py_ssize_t lo = indptr[i]
    cdef Py_ssize_t hi = indptr[i + 1]
    cdef double label = labels[i]
    cdef Py_ssize_t p, q
    cdef double s, v, base

    plus_arr = np.empty(d, dtype=np.float64)
    minus_arr = np.empty(d, dtype=np.float64)
    cdef double[::1] plus = plus_arr
    cdef double[::1] minus = minus_arr

    with nogil:
        s = 0.0
        for p in range(lo, hi):
            s += data[p] * x[indices[p]]
        base = _sigmoid(label * s)
        for q in range(d):
            plus[q] = base
            minus[q] = base
        # off-support coordinates never touch the margin; only the row's
        # own coordinates need a fresh dot product
        for p in range(lo, hi):
            s = 0.0
            for q in range(lo, hi):
                v = x[indices[q]]
                if q == p:
                    v = v + mu
                s += data[q] * v
            plus[indices[p]] = _sigmoid(label * s)
            s = 0.0
            for q in range(lo, hi):
                v = x[indices[q]]
                if q == p:
                    v = v - mu
                s += data[q] * v
            minus[indices[p]] = _sigmoid(label * s)
    return plus_arr, minus_arr
