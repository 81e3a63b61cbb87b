"""Numpy fallback for the compiled incidence kernels.

Same signatures and semantics as ``_kernels.pyx``.
"""
import numpy as np
from scipy import sparse


def _incidence(indptr, indices, n_cols):
    # repeated members are summed, as in the compiled loops
    data = np.ones(len(indices), dtype=np.float64)
    return sparse.csr_matrix((data, indices, indptr), shape=(len(indptr) - 1, n_cols))


def segment_sum(indptr, indices, x):
    return np.asarray(_incidence(indptr, indices, x.shape[0]) @ x)


def scatter_add(indptr, indices, grad, n_rows):
    return np.asarray(_incidence(indptr, indices, n_rows).T @ grad)


def segment_maxmin(indptr, indices, x):
    n_groups = len(indptr) - 1
    out = np.zeros((n_groups, x.shape[1]), dtype=np.float64)
    nonempty = np.flatnonzero(np.diff(indptr) > 0)
    if len(nonempty) == 0:
        return out
    gathered = x[indices]
    starts = indptr[nonempty]
    out[nonempty] = (np.maximum.reduceat(gathered, starts, axis=0)
                     - np.minimum.reduceat(gathered, starts, axis=0))
    return out
