"""Hypergraph container, text I/O, synthetic generation and splitting."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class HypergraphFormatError(ValueError):
    """Malformed hypergraph file; ``lineno`` is 1-based (0 if unknown)."""

    def __init__(self, message: str, lineno: int = 0):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


@dataclass(frozen=True)
class Hypergraph:
    """Node count plus an ordered sequence of hyperedges.

    Hyperedges keep the member order they were given in, and duplicate
    hyperedges are allowed (multiset semantics).
    """

    num_nodes: int
    hyperedges: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        edges = tuple(tuple(int(v) for v in e) for e in self.hyperedges)
        object.__setattr__(self, "hyperedges", edges)
        if self.num_nodes < 0:
            raise ValueError("num_nodes must be non-negative")
        for j, e in enumerate(edges):
            _check_edge(e, self.num_nodes, where=f"hyperedge {j}")

    @property
    def num_edges(self) -> int:
        return len(self.hyperedges)

    def sizes(self) -> np.ndarray:
        return np.array([len(e) for e in self.hyperedges], dtype=np.int64)

    def subset(self, edge_ids) -> "Hypergraph":
        return Hypergraph(self.num_nodes, tuple(self.hyperedges[int(j)] for j in edge_ids))


def _check_edge(edge, num_nodes, where="", lineno=0):
    if len(edge) == 0:
        raise HypergraphFormatError(f"{where}: empty hyperedge".lstrip(": "), lineno)
    for v in edge:
        if v < 0 or v >= num_nodes:
            raise HypergraphFormatError(
                f"{where}: node id {v} out of range [0, {num_nodes})".lstrip(": "), lineno)
    if len(set(edge)) != len(edge):
        raise HypergraphFormatError(f"{where}: repeated node id".lstrip(": "), lineno)


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def load_hypergraph(path):
    """Read a hypergraph file.

    Layout: header ``n m d``; ``m`` hyperedge lines; then optionally ``n``
    feature lines of ``d`` reals (only when ``d > 0``) and optionally one
    label line of ``n`` integers. Lines starting with ``#`` are comments.

    Returns
    -------
    (Hypergraph, features or None, labels or None)
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.split("\n"))]
    lines = [(i, ln) for i, ln in lines if not ln.startswith("#")]

    it = iter(lines)
    header = None
    for lineno, ln in it:
        if ln:
            header = (lineno, ln)
            break
    if header is None:
        raise HypergraphFormatError("missing header line")
    lineno, ln = header
    parts = ln.split()
    try:
        n, m, d = (int(p) for p in parts)
    except ValueError:
        raise HypergraphFormatError(f"malformed header {ln!r}, expected 'n m d'", lineno) from None
    if n < 0 or m < 0 or d < 0:
        raise HypergraphFormatError("header values must be non-negative", lineno)

    edges = []
    for _ in range(m):
        try:
            lineno, ln = next(it)
        except StopIteration:
            raise HypergraphFormatError(f"expected {m} hyperedge lines, got {len(edges)}") from None
        try:
            edge = tuple(int(p) for p in ln.split())
        except ValueError:
            raise HypergraphFormatError(f"non-integer node id in {ln!r}", lineno) from None
        _check_edge(edge, n, lineno=lineno)
        edges.append(edge)

    rest = [(i, ln) for i, ln in it if ln]
    features = labels = None
    if d > 0 and len(rest) >= n and not (len(rest) == 1 and n != 1):
        rows = []
        for lineno, ln in rest[:n]:
            try:
                row = [float(p) for p in ln.split()]
            except ValueError:
                raise HypergraphFormatError(f"non-numeric feature in {ln!r}", lineno) from None
            if len(row) != d:
                raise HypergraphFormatError(f"expected {d} features, got {len(row)}", lineno)
            rows.append(row)
        features = np.array(rows, dtype=np.float64).reshape(n, d)
        if not np.all(np.isfinite(features)):
            raise HypergraphFormatError("non-finite feature value")
        rest = rest[n:]
    if len(rest) == 1:
        lineno, ln = rest[0]
        try:
            labels = np.array([int(p) for p in ln.split()], dtype=np.int64)
        except ValueError:
            raise HypergraphFormatError(f"non-integer label in {ln!r}", lineno) from None
        if len(labels) != n:
            raise HypergraphFormatError(f"expected {n} labels, got {len(labels)}", lineno)
        check_labels(labels)
    elif rest:
        raise HypergraphFormatError("unexpected trailing lines", rest[0][0])
    return Hypergraph(n, tuple(edges)), features, labels


def save_hypergraph(path, hypergraph: Hypergraph, features=None, labels=None):
    """Write the format read by :func:`load_hypergraph`; floats use ``repr`` so reloads are exact."""
    d = 0 if features is None else int(np.shape(features)[1])
    out = [f"{hypergraph.num_nodes} {hypergraph.num_edges} {d}"]
    out.extend(" ".join(str(v) for v in e) for e in hypergraph.hyperedges)
    if features is not None:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[0] != hypergraph.num_nodes:
            raise ValueError("feature rows must equal num_nodes")
        out.extend(" ".join(repr(float(x)) for x in row) for row in features)
    if labels is not None:
        out.append(" ".join(str(int(c)) for c in labels))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def check_labels(labels):
    labels = np.asarray(labels)
    if labels.size and labels.min() < 0:
        raise ValueError("labels must be non-negative class indices")
    present = np.unique(labels)
    if not np.array_equal(present, np.arange(len(present))):
        raise ValueError("class indices must be contiguous from 0")
    return labels


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Two-class Gaussian features with affinity-driven hyperedges.

    ``N`` nodes per class; nodes ``0..N-1`` are class 1, ``N..2N-1`` class 0.
    """

    N: int
    d: int
    affinity: float
    edge_sizes: tuple[int, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "edge_sizes", tuple(int(s) for s in self.edge_sizes))
        if self.N < 1 or self.d < 1:
            raise ValueError("N and d must be at least 1")
        if not 0.0 <= self.affinity <= 1.0:
            raise ValueError("affinity must lie in [0, 1]")
        for s in self.edge_sizes:
            if s < 2 or s > 2 * self.N:
                raise ValueError(f"hyperedge size {s} outside [2, {2 * self.N}]")


def generate_synthetic(spec: SyntheticSpec):
    """Sample (hypergraph, features, labels) from the two-class data model."""
    rng = np.random.default_rng(spec.seed)
    N, d = spec.N, spec.d
    labels = np.concatenate([np.ones(N, dtype=np.int64), np.zeros(N, dtype=np.int64)])
    means = np.where(labels[:, None] == 1, 0.5, -0.5)
    features = means + rng.standard_normal((2 * N, d))

    edges = []
    for size in spec.edge_sizes:
        c = rng.random() < 0.5
        p = spec.affinity if c else 1.0 - spec.affinity
        while True:
            k1 = int(rng.binomial(size, p))
            if k1 <= N and size - k1 <= N:
                break
        ones = rng.choice(N, size=k1, replace=False)
        zeros = N + rng.choice(N, size=size - k1, replace=False)
        edges.append(tuple(sorted(int(v) for v in np.concatenate([ones, zeros]))))
    return Hypergraph(2 * N, tuple(edges)), features, labels


# ---------------------------------------------------------------------------
# corruption and homophily
# ---------------------------------------------------------------------------

def node_swap(hyperedges: Sequence[Sequence[int]], T: int, seed) -> list[tuple[int, ...]]:
    """Exchange random members between random hyperedge pairs, ``T`` times.

    Each iteration draws two distinct hyperedge positions and one member of
    each. A draw that would repeat a node inside a hyperedge leaves both
    hyperedges unchanged, so sizes and per-edge distinctness are preserved.
    """
    edges = [list(e) for e in hyperedges]
    if len(edges) < 2:
        raise ValueError("node swapping needs at least 2 hyperedges")
    if T < 0:
        raise ValueError("T must be non-negative")
    rng = np.random.default_rng(seed)
    for _ in range(T):
        a, b = rng.choice(len(edges), size=2, replace=False)
        ia = int(rng.integers(len(edges[a])))
        ib = int(rng.integers(len(edges[b])))
        va, vb = edges[a][ia], edges[b][ib]
        if va == vb or vb in edges[a] or va in edges[b]:
            continue
        edges[a][ia], edges[b][ib] = vb, va
    return [tuple(e) for e in edges]


def pairwise_homophily(hypergraph: Hypergraph, labels) -> float:
    """Fraction of within-hyperedge node pairs whose endpoints share a class."""
    labels = np.asarray(labels)
    if len(labels) != hypergraph.num_nodes:
        raise ValueError("labels must cover all nodes")
    same = total = 0
    for e in hypergraph.hyperedges:
        k = len(e)
        if k < 2:
            continue
        counts = np.bincount(labels[list(e)])
        same += int(np.sum(counts * (counts - 1) // 2))
        total += k * (k - 1) // 2
    if total == 0:
        raise ValueError("homophily undefined: no hyperedge has two or more members")
    return same / total


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """Either ``ratios`` (train, valid, test) or ``per_class`` (train, valid) counts."""

    ratios: tuple[float, float, float] | None = (0.01, 0.01, 0.98)
    per_class: tuple[int, int] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.per_class is not None:
            if min(self.per_class) < 0:
                raise ValueError("per-class counts must be non-negative")
            return
        if self.ratios is None or len(self.ratios) != 3:
            raise ValueError("give three split ratios or per-class counts")
        if min(self.ratios) <= 0 or not math.isclose(sum(self.ratios), 1.0, abs_tol=1e-9):
            raise ValueError("split ratios must be positive and sum to 1")


def _floor_counts(total, ratios):
    counts = [math.floor(r * total + 1e-9) for r in ratios]
    counts[0] += total - sum(counts)
    return counts


def split_nodes(labels, spec: SplitSpec):
    """Random train/valid/test node split.

    With ratios, each part gets ``floor(r * n)`` nodes and the remainder goes
    to train; then for every class absent from train, one of its test nodes
    is swapped in for a train node of a class represented more than once.
    """
    labels = np.asarray(labels)
    n = len(labels)
    classes = np.unique(labels)
    rng = np.random.default_rng(spec.seed)

    if spec.per_class is not None:
        k_tr, k_va = spec.per_class
        train, valid, test = [], [], []
        for c in classes:
            members = rng.permutation(np.flatnonzero(labels == c))
            if len(members) < k_tr + k_va + 1:
                raise ValueError(f"class {c} has {len(members)} nodes; needs at least {k_tr + k_va + 1}")
            train.extend(members[:k_tr])
            valid.extend(members[k_tr:k_tr + k_va])
            test.extend(members[k_tr + k_va:])
        return tuple(np.sort(np.array(s, dtype=np.int64)) for s in (train, valid, test))

    for c in classes:
        if np.sum(labels == c) < 2:
            raise ValueError(f"class {c} needs at least 2 nodes")
    n_tr, n_va, _ = _floor_counts(n, spec.ratios)
    perm = rng.permutation(n)
    train = list(perm[:n_tr])
    valid = list(perm[n_tr:n_tr + n_va])
    test = list(perm[n_tr + n_va:])
    for c in classes:
        if any(labels[v] == c for v in train):
            continue
        pool = [v for v in test if labels[v] == c] or [v for v in valid if labels[v] == c]
        incoming = pool[int(rng.integers(len(pool)))]
        source = test if incoming in test else valid
        source.remove(incoming)
        counts = np.bincount(labels[train], minlength=len(classes)) if train else None
        donors = [v for v in train if counts[labels[v]] > 1] if train else []
        if donors:
            outgoing = donors[int(rng.integers(len(donors)))]
            train.remove(outgoing)
            source.append(outgoing)
        train.append(incoming)
    if not test:
        raise ValueError("test split is empty")
    return tuple(np.sort(np.array(s, dtype=np.int64)) for s in (train, valid, test))


def split_hyperedges(hypergraph: Hypergraph, ratios=(0.6, 0.2, 0.2), seed=0):
    """Random partition of hyperedge positions into train/valid/test index arrays."""
    m = hypergraph.num_edges
    if m < 5:
        raise ValueError(f"need at least 5 hyperedges to split, got {m}")
    if min(ratios) <= 0 or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError("split ratios must be positive and sum to 1")
    n_tr, n_va, _ = _floor_counts(m, ratios)
    perm = np.random.default_rng(seed).permutation(m)
    return (np.sort(perm[:n_tr]), np.sort(perm[n_tr:n_tr + n_va]), np.sort(perm[n_tr + n_va:]))
