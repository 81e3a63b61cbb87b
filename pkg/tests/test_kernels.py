"""The compiled kernels and the numpy fallback must agree."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypeboy import _kernels_py, kernels

try:
    from hypeboy import _kernels as _compiled
except ImportError:
    _compiled = None

needs_compiled = pytest.mark.skipif(_compiled is None, reason="extension not built")


@st.composite
def csr_case(draw):
    n_rows = draw(st.integers(1, 8))
    n_groups = draw(st.integers(0, 8))
    dim = draw(st.integers(1, 4))
    groups = [draw(st.lists(st.integers(0, n_rows - 1), max_size=5)) for _ in range(n_groups)]
    indptr = np.concatenate([[0], np.cumsum([len(g) for g in groups])]).astype(np.int64)
    indices = np.array([v for g in groups for v in g], dtype=np.int64)
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    return indptr, indices, rng.standard_normal((n_rows, dim)), rng.standard_normal((n_groups, dim)), groups


def reference(groups, x, g):
    seg = np.zeros((len(groups), x.shape[1]))
    mm = np.zeros_like(seg)
    for k, m in enumerate(groups):
        if m:
            seg[k] = x[m].sum(axis=0)
            mm[k] = x[m].max(axis=0) - x[m].min(axis=0)
    sc = np.zeros_like(x)
    for k, m in enumerate(groups):
        for v in m:
            sc[v] += g[k]
    return seg, sc, mm


@pytest.mark.parametrize("impl", [_kernels_py, pytest.param(_compiled, marks=needs_compiled)],
                         ids=["python", "cython"])
@given(case=csr_case())
def test_kernels_match_reference(impl, case):
    indptr, indices, x, g, groups = case
    seg, sc, mm = reference(groups, x, g)
    np.testing.assert_allclose(impl.segment_sum(indptr, indices, x), seg, atol=1e-12)
    np.testing.assert_allclose(impl.scatter_add(indptr, indices, g, x.shape[0]), sc, atol=1e-12)
    np.testing.assert_allclose(impl.segment_maxmin(indptr, indices, x), mm, atol=1e-12)


@needs_compiled
def test_backends_agree_on_large_input():
    rng = np.random.default_rng(0)
    sizes = rng.integers(0, 7, size=500)
    indptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    indices = rng.integers(0, 300, size=int(indptr[-1])).astype(np.int64)
    x = rng.standard_normal((300, 16))
    g = rng.standard_normal((500, 16))
    for name, args in [("segment_sum", (indptr, indices, x)),
                       ("scatter_add", (indptr, indices, g, 300)),
                       ("segment_maxmin", (indptr, indices, x))]:
        np.testing.assert_allclose(getattr(_compiled, name)(*args), getattr(_kernels_py, name)(*args),
                                   rtol=1e-12, atol=1e-12)


def test_dispatch_coerces_dtypes():
    out = kernels.segment_sum([0, 2], [0, 1], np.array([[1, 2], [3, 4]], dtype=np.int32))
    np.testing.assert_array_equal(out, [[4, 6]])
    assert kernels.BACKEND in ("cython", "python")
