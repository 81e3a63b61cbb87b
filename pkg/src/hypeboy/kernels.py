"""Backend selection for the incidence kernels.

The compiled extension is used when it was built; otherwise the numpy
implementation is loaded. Set ``HYPEBOY_PURE_PYTHON=1`` to force the
fallback (useful for benchmarking and for checking that both agree).
"""
import os

import numpy as np

if os.environ.get("HYPEBOY_PURE_PYTHON") == "1":
    from hypeboy import _kernels_py as _impl
    BACKEND = "python"
else:
    try:
        from hypeboy import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        from hypeboy import _kernels_py as _impl
        BACKEND = "python"


def _csr(indptr, indices):
    return (np.ascontiguousarray(indptr, dtype=np.int64),
            np.ascontiguousarray(indices, dtype=np.int64))


def segment_sum(indptr, indices, x):
    indptr, indices = _csr(indptr, indices)
    return _impl.segment_sum(indptr, indices, np.ascontiguousarray(x, dtype=np.float64))


def scatter_add(indptr, indices, grad, n_rows):
    indptr, indices = _csr(indptr, indices)
    return _impl.scatter_add(indptr, indices,
                             np.ascontiguousarray(grad, dtype=np.float64), int(n_rows))


def segment_maxmin(indptr, indices, x):
    indptr, indices = _csr(indptr, indices)
    return _impl.segment_maxmin(indptr, indices, np.ascontiguousarray(x, dtype=np.float64))
