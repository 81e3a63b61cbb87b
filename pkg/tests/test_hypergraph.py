import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from strategies import hypergraphs

from hypeboy.hypergraph import (Hypergraph, HypergraphFormatError, SplitSpec, SyntheticSpec,
                                generate_synthetic, load_hypergraph, node_swap, pairwise_homophily,
                                save_hypergraph, split_hyperedges, split_nodes)


def test_parse_small_file(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("# toy\n3 2 2\n0 1\n1 2\n0.5 1\n-1 2\n3 4\n0 1 0\n")
    hg, X, y = load_hypergraph(p)
    assert hg.num_nodes == 3
    assert hg.hyperedges == ((0, 1), (1, 2))
    np.testing.assert_array_equal(X, [[0.5, 1], [-1, 2], [3, 4]])
    np.testing.assert_array_equal(y, [0, 1, 0])


def test_labels_without_features(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("3 1 0\n0 1 2\n1 0 1\n")
    hg, X, y = load_hypergraph(p)
    assert X is None
    np.testing.assert_array_equal(y, [1, 0, 1])


@pytest.mark.parametrize("body, line", [
    ("3 2 0\n0 1\n5\n", 3),          # id out of range
    ("3 2 0\n0 1\n\n", None),        # missing hyperedge line
    ("3 x 0\n", 1),                  # malformed header
    ("3 1 0\n0 0\n", 2),             # repeated node
    ("3 1 2\n0 1\n1 2\n3 x\n5 6\n", 4),
])
def test_format_errors_carry_line_numbers(tmp_path, body, line):
    p = tmp_path / "bad.txt"
    p.write_text(body)
    with pytest.raises(HypergraphFormatError) as info:
        load_hypergraph(p)
    if line is not None:
        assert info.value.lineno == line


def test_roundtrip_is_bit_exact(tmp_path):
    hg, X, y = generate_synthetic(SyntheticSpec(5, 3, 0.8, (2, 3, 4), seed=1))
    p = tmp_path / "g.txt"
    save_hypergraph(p, hg, X, y)
    hg2, X2, y2 = load_hypergraph(p)
    assert hg2 == hg
    assert X2.tobytes() == X.tobytes()
    np.testing.assert_array_equal(y2, y)


@given(hypergraphs())
def test_roundtrip_property(tmp_path_factory, hg):
    p = tmp_path_factory.mktemp("rt") / "g.txt"
    save_hypergraph(p, hg)
    assert load_hypergraph(p)[0] == hg


def test_synthetic_layout_and_determinism():
    spec = SyntheticSpec(50, 4, 0.9, (4,) * 30, seed=3)
    hg, X, y = generate_synthetic(spec)
    np.testing.assert_array_equal(y, [1] * 50 + [0] * 50)
    hg2, X2, _ = generate_synthetic(spec)
    assert hg2 == hg and X2.tobytes() == X.tobytes()
    assert all(len(e) == 4 for e in hg.hyperedges)


def test_synthetic_full_affinity_gives_pure_edges():
    hg, _, y = generate_synthetic(SyntheticSpec(10, 2, 1.0, (4,) * 200, seed=0))
    for e in hg.hyperedges:
        assert len(set(y[list(e)])) == 1


def test_synthetic_feature_means():
    _, X, y = generate_synthetic(SyntheticSpec(10_000, 3, 0.5, (2,), seed=0))
    np.testing.assert_allclose(X[y == 1].mean(axis=0), 0.5, atol=0.05)
    np.testing.assert_allclose(X[y == 0].mean(axis=0), -0.5, atol=0.05)


def test_half_affinity_count_is_binomial():
    hg, _, y = generate_synthetic(SyntheticSpec(20, 1, 0.5, (4,) * 10_000, seed=5))
    k = np.array([y[list(e)].sum() for e in hg.hyperedges])
    observed = np.bincount(k, minlength=5)
    expected = stats.binom.pmf(np.arange(5), 4, 0.5) * len(k)
    assert stats.chisquare(observed, expected).pvalue > 1e-3


def test_affinity_mirror():
    # P and 1-P give mirrored class-1 member counts
    a, _, y = generate_synthetic(SyntheticSpec(20, 1, 0.8, (4,) * 10_000, seed=1))
    b, _, _ = generate_synthetic(SyntheticSpec(20, 1, 0.2, (4,) * 10_000, seed=2))
    ka = np.bincount([y[list(e)].sum() for e in a.hyperedges], minlength=5)
    kb = np.bincount([4 - y[list(e)].sum() for e in b.hyperedges], minlength=5)
    table = np.vstack([ka, kb])
    assert stats.chi2_contingency(table[:, table.sum(axis=0) > 0]).pvalue > 1e-3


def test_synthetic_rejects_bad_spec():
    with pytest.raises(ValueError):
        SyntheticSpec(2, 2, 1.5, (2,))
    with pytest.raises(ValueError):
        SyntheticSpec(2, 2, 0.5, (5,))


@given(hypergraphs(min_edges=2), st.integers(0, 30), st.integers(0, 2**32 - 1))
def test_node_swap_preserves_sizes(hg, T, seed):
    out = node_swap(hg.hyperedges, T, seed)
    assert sorted(map(len, out)) == sorted(map(len, hg.hyperedges))
    assert sum(map(len, out)) == sum(map(len, hg.hyperedges))
    assert all(len(set(e)) == len(e) for e in out)
    Hypergraph(hg.num_nodes, tuple(out))  # still valid


def test_node_swap_zero_iterations_is_identity():
    edges = [(0, 1), (2, 3, 4)]
    assert node_swap(edges, 0, seed=1) == edges


def test_node_swap_rejects_single_edge():
    with pytest.raises(ValueError):
        node_swap([(0, 1)], 3, seed=0)


def test_swaps_lower_homophily():
    hg, _, y = generate_synthetic(SyntheticSpec(50, 2, 0.95, (4,) * 100, seed=0))
    before = pairwise_homophily(hg, y)
    after = pairwise_homophily(Hypergraph(hg.num_nodes, tuple(node_swap(hg.hyperedges, 200, 0))), y)
    assert after < before


def test_homophily_examples():
    assert pairwise_homophily(Hypergraph(3, ((0, 1, 2),)), [0, 0, 0]) == 1.0
    assert pairwise_homophily(Hypergraph(2, ((0, 1),)), [0, 1]) == 0.0
    with pytest.raises(ValueError):
        pairwise_homophily(Hypergraph(2, ((0,), (1,))), [0, 1])
    hg, _, y = generate_synthetic(SyntheticSpec(500, 1, 0.9, (4,) * 1000, seed=0))
    assert 0.6 < pairwise_homophily(hg, y) < 0.95


def test_default_split_on_200_nodes():
    y = np.array([1] * 100 + [0] * 100)
    for seed in range(20):
        tr, va, te = split_nodes(y, SplitSpec(seed=seed))
        assert len(tr) == 2 and set(y[tr]) == {0, 1}
        assert len(va) == 2 and len(te) == 196
        assert sorted(np.concatenate([tr, va, te])) == list(range(200))


def test_per_class_split():
    y = np.array([0] * 30 + [1] * 20 + [2] * 15)
    tr, va, te = split_nodes(y, SplitSpec(per_class=(5, 5), seed=2))
    for c in range(3):
        assert np.sum(y[tr] == c) == 5 and np.sum(y[va] == c) == 5
    assert len(tr) + len(va) + len(te) == len(y)


def test_split_determinism_and_errors():
    y = np.array([0, 1] * 50)
    a = split_nodes(y, SplitSpec(seed=9))
    b = split_nodes(y, SplitSpec(seed=9))
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)
    with pytest.raises(ValueError):
        split_nodes(np.array([0] * 10 + [1]), SplitSpec())
    with pytest.raises(ValueError):
        SplitSpec(ratios=(0.5, 0.5, 0.5))


@given(st.lists(st.integers(0, 3), min_size=20, max_size=80), st.integers(0, 1000))
def test_split_nodes_partition(labels, seed):
    y = np.array(labels)
    _, y = np.unique(y, return_inverse=True)
    if np.bincount(y).min() < 2:
        return
    tr, va, te = split_nodes(y, SplitSpec(ratios=(0.1, 0.1, 0.8), seed=seed))
    allidx = np.concatenate([tr, va, te])
    assert len(allidx) == len(y) == len(set(allidx.tolist()))
    assert set(y[tr]) == set(y)


@pytest.mark.parametrize("m, sizes", [(10, (6, 2, 2)), (5, (3, 1, 1)), (7, (5, 1, 1))])
def test_split_hyperedges_rounding(m, sizes):
    hg = Hypergraph(3, tuple((0, 1) for _ in range(m)))
    parts = split_hyperedges(hg, seed=0)
    assert tuple(map(len, parts)) == sizes
    assert sorted(np.concatenate(parts).tolist()) == list(range(m))


def test_split_hyperedges_needs_five():
    with pytest.raises(ValueError):
        split_hyperedges(Hypergraph(3, ((0, 1),) * 4))
