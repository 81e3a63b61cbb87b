# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled incidence kernels.

Groups are given in CSR form: members of group ``g`` are
``indices[indptr[g]:indptr[g + 1]]``. Every loop visits members in
storage order so results are reproducible run to run.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def segment_sum(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                const double[:, ::1] x):
    cdef Py_ssize_t n_groups = indptr.shape[0] - 1
    cdef Py_ssize_t cols = x.shape[1]
    out_arr = np.zeros((n_groups, cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t g, p, c
    cdef cnp.int64_t row
    with nogil:
        for g in range(n_groups):
            for p in range(indptr[g], indptr[g + 1]):
                row = indices[p]
                for c in range(cols):
                    out[g, c] += x[row, c]
    return out_arr


def scatter_add(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                const double[:, ::1] grad, Py_ssize_t n_rows):
    """Adjoint of :func:`segment_sum`: route each group row back to its members."""
    cdef Py_ssize_t n_groups = indptr.shape[0] - 1
    cdef Py_ssize_t cols = grad.shape[1]
    out_arr = np.zeros((n_rows, cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t g, p, c
    cdef cnp.int64_t row
    with nogil:
        for g in range(n_groups):
            for p in range(indptr[g], indptr[g + 1]):
                row = indices[p]
                for c in range(cols):
                    out[row, c] += grad[g, c]
    return out_arr


def segment_maxmin(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                   const double[:, ::1] x):
    """Per group, coordinate-wise max minus min over member rows (zero if empty)."""
    cdef Py_ssize_t n_groups = indptr.shape[0] - 1
    cdef Py_ssize_t cols = x.shape[1]
    out_arr = np.zeros((n_groups, cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t g, p, c, start, stop
    cdef double hi, lo, v
    cdef cnp.int64_t row
    with nogil:
        for g in range(n_groups):
            start = indptr[g]
            stop = indptr[g + 1]
            if start == stop:
                continue
            for c in range(cols):
                hi = x[indices[start], c]
                lo = hi
                for p in range(start + 1, stop):
                    v = x[indices[p], c]
                    if v > hi:
                        hi = v
                    elif v < lo:
                        lo = v
                out[g, c] = hi - lo
    return out_arr
