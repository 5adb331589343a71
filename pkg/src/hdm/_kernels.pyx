# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled assembly kernels.

Same contract as :mod:`hdm._kernels_py`; the local Gram products are formed
and scattered cell by cell without temporaries.
"""

import numpy as np

from libc.stdint cimport int64_t


cdef inline Py_ssize_t _find(const int64_t[::1] indices, Py_ssize_t lo, Py_ssize_t hi, int64_t col) nogil:
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if indices[mid] < col:
            lo = mid + 1
        else:
            hi = mid
    return lo


def scatter_gram(const double[:, :, ::1] Rt, const int64_t[:, ::1] stencil,
                 const int64_t[::1] indptr, const int64_t[::1] indices, double[::1] data):
    """Add local Gram matrices ``Rt[c] @ Rt[c].T`` into the upper CSR pattern."""
    cdef Py_ssize_t nb = Rt.shape[0], s = Rt.shape[1], m = Rt.shape[2]
    cdef Py_ssize_t c, a, b, k, pos, end
    cdef int64_t ia, ib
    cdef double acc
    cdef bint missing = False
    with nogil:
        for c in range(nb):
            for a in range(s):
                ia = stencil[c, a]
                if ia < 0:
                    continue
                for b in range(s):
                    ib = stencil[c, b]
                    if ib < ia:
                        continue
                    acc = 0.0
                    for k in range(m):
                        acc = acc + Rt[c, a, k] * Rt[c, b, k]
                    end = indptr[ia + 1]
                    pos = _find(indices, indptr[ia], end, ib)
                    if pos >= end or indices[pos] != ib:
                        missing = True
                        continue
                    data[pos] += acc
    if missing:
        raise ValueError("local entry outside the sparsity pattern")


def scatter_vector(const double[:, ::1] local, const int64_t[:, ::1] stencil, double[::1] out):
    """Add ``local`` (nb, s) into ``out`` at the stencil positions."""
    cdef Py_ssize_t nb = local.shape[0], s = local.shape[1], c, a
    cdef int64_t i
    with nogil:
        for c in range(nb):
            for a in range(s):
                i = stencil[c, a]
                if i >= 0:
                    out[i] += local[c, a]
