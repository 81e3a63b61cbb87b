"""Toy-model analysis of hyperedge filling.

Nodes come in two classes of ``N`` each with Gaussian features of mean
``+0.5`` (class 1) or ``-0.5`` (class 0) in every coordinate and identity
covariance. Hyperedges of size ``S`` are drawn with class affinity ``P``.
This module computes the probability that a query subset points towards
the right class, checks it by simulation, measures how one filling-gradient
step changes naive-Bayes accuracy, and builds the SVD solution that
separates completing nodes from all others.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hypeboy.hypergraph import Hypergraph

_SQRT2 = math.sqrt(2.0)


def normal_cdf(t):
    """Standard normal CDF through the complementary error function (accurate in both tails)."""
    t = float(t)
    if not math.isfinite(t):
        raise ValueError("normal_cdf needs a finite argument")
    return 0.5 * math.erfc(-t / _SQRT2)


# ---------------------------------------------------------------------------
# filling probability and the one-step update
# ---------------------------------------------------------------------------

def _query_sum(X, q):
    q = list(q)
    if not q:
        raise ValueError("query subset is empty")
    return np.asarray(X, dtype=np.float64)[q].sum(axis=0)


def filling_probabilities_raw(X, q):
    """Softmax over every node of ``x_t . s`` where ``s`` sums the query rows."""
    X = np.asarray(X, dtype=np.float64)
    logits = X @ _query_sum(X, q)
    logits -= logits.max()
    p = np.exp(logits)
    return p / p.sum()


def filling_prob_raw(X, i, q):
    X = np.asarray(X, dtype=np.float64)
    if not 0 <= i < X.shape[0]:
        raise IndexError(f"node {i} out of range")
    return float(filling_probabilities_raw(X, q)[i])


def update_representation(X, i, q, gamma):
    """``x_i`` after one gradient step of size ``gamma`` on ``-log p(i | q)`` w.r.t. ``x_i``.

    The step is ``gamma * (1 - p) * s``; ``gamma == 0`` returns ``x_i`` unchanged.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    x_i = np.array(np.asarray(X, dtype=np.float64)[i])
    if gamma == 0:
        return x_i
    f = filling_prob_raw(X, i, q)
    return x_i + gamma * (1.0 - f) * _query_sum(X, q)


def gnb_classify(x):
    """Naive-Bayes class under means ``+-0.5`` and identity covariance; ties go to class 0.

    Accepts one vector or a stack of vectors (last axis is the feature axis).
    """
    x = np.asarray(x, dtype=np.float64)
    d1 = np.sum((x - 0.5) ** 2, axis=-1)
    d0 = np.sum((x + 0.5) ** 2, axis=-1)
    out = (d1 < d0).astype(np.int64)
    return int(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# condition probability: closed form and simulation
# ---------------------------------------------------------------------------

def closed_form_condition_prob(S, d, P):
    """Probability that the query of a class-1 missing node has a positive coordinate sum.

    Mixes over the number ``s`` of class-1 members of a hyperedge that
    contains the missing node; given ``s`` the coordinate sum is Gaussian.
    """
    if S < 2:
        raise ValueError("S must be at least 2")
    if d < 1:
        raise ValueError("d must be at least 1")
    if not 0.0 <= P <= 1.0:
        raise ValueError("P must lie in [0, 1]")
    scale = math.sqrt(d / (4.0 * (S - 1)))
    total = 0.0
    for s in range(1, S + 1):
        weight = P ** s * (1 - P) ** (S - s) + (1 - P) ** s * P ** (S - s)
        total += math.comb(S, s) * s * weight * normal_cdf((2 * s - S - 1) * scale)
    return total / S


@dataclass(frozen=True)
class TheoryModel:
    """Parameters of the toy model and of the simulations run on it.

    ``gamma == 0`` is allowed as the no-update limit.
    """

    N: int = 10
    d: int = 4
    P: float = 0.9
    S: int = 4
    gamma: float = 1.0
    trials: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.S < 2:
            raise ValueError("S must be at least 2")
        if self.N < self.S:
            raise ValueError("N must be at least S so any class mix fits in one hyperedge")
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if not 0.0 <= self.P <= 1.0:
            raise ValueError("P must lie in [0, 1]")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")


def _sample_edges_with_node(rng, S, N, P, count, cls):
    """Class-``cls`` member counts of hyperedges conditioned on containing one fixed class-``cls`` node.

    A hyperedge draw follows the generator (class coin, binomial count,
    uniform members); it is kept when the fixed node is among the
    ``k`` same-class members, which happens with probability ``k / N``.
    """
    out = np.empty(0, dtype=np.int64)
    while out.size < count:
        batch = max(2 * (count - out.size), 1024)
        c = rng.random(batch) < 0.5
        k1 = rng.binomial(S, np.where(c, P, 1.0 - P))
        k = k1 if cls == 1 else S - k1
        hit = rng.integers(0, N, size=batch) < k
        out = np.concatenate([out, k[hit]])
    return out[:count]


def mc_condition_prob(model: TheoryModel, batch=200_000):
    """Simulated probability that a class-1 node's query subset has positive feature sum.

    Returns ``(estimate, standard_error)``. Every query member gets its own
    full ``d``-dimensional Gaussian feature vector.
    """
    rng = np.random.default_rng(model.seed)
    hits = 0
    done = 0
    while done < model.trials:
        n = min(batch // max(1, model.S - 1), model.trials - done)
        k = _sample_edges_with_node(rng, model.S, model.N, model.P, n, cls=1)
        # query: k-1 class-1 members then S-k class-0 members
        pos = np.arange(model.S - 1)[None, :] < (k - 1)[:, None]
        means = np.where(pos, 0.5, -0.5)[:, :, None]
        feats = means + rng.standard_normal((n, model.S - 1, model.d))
        hits += int(np.count_nonzero(feats.sum(axis=(1, 2)) > 0))
        done += n
    p = hits / model.trials
    return p, math.sqrt(p * (1.0 - p) / model.trials)


# ---------------------------------------------------------------------------
# effectiveness of one filling step
# ---------------------------------------------------------------------------

@dataclass
class EffectivenessResult:
    acc_x: float
    acc_z: float
    correct_x: np.ndarray = field(repr=False)
    correct_z: np.ndarray = field(repr=False)
    resampled: int = 0

    @property
    def gain(self):
        return self.acc_z - self.acc_x

    def _bootstrap(self, resamples, seed):
        # differences take values in {-1, 0, 1}: a paired resample is a multinomial draw
        diff = self.correct_z.astype(np.int64) - self.correct_x.astype(np.int64)
        n = diff.size
        freq = np.array([np.sum(diff == v) for v in (-1, 0, 1)], dtype=np.float64) / n
        counts = np.random.default_rng(seed).multinomial(n, freq, size=resamples)
        return (counts[:, 2] - counts[:, 0]) / n

    def bootstrap_ci(self, level=0.95, resamples=2000, seed=0):
        """Percentile interval for ``acc_z - acc_x``, trials resampled in pairs."""
        alpha = (1.0 - level) / 2.0
        lo, hi = np.quantile(self._bootstrap(resamples, seed), [alpha, 1.0 - alpha])
        return float(lo), float(hi)

    def standard_error(self, resamples=2000, seed=0):
        return float(np.std(self._bootstrap(resamples, seed), ddof=1))


def _effectiveness_batch(rng, model, V_size, cls, n, enforce_condition):
    """Correctness of naive Bayes on ``x_i`` and on the updated ``z_i`` for ``n`` accepted trials."""
    N = V_size // 2
    S, d = model.S, model.d
    sign = 1.0 if cls == 1 else -1.0
    # node 0 of the universe is the missing node; the rest of its class follows, then the other class
    k = _sample_edges_with_node(rng, S, N, model.P, n, cls)
    X = np.empty((n, V_size, d))
    X[:, :N] = 0.5 * sign + rng.standard_normal((n, N, d))
    X[:, N:] = -0.5 * sign + rng.standard_normal((n, V_size - N, d))
    # query: k-1 same-class nodes (ids 1..k-1) and S-k other-class nodes (ids N..N+S-k-1)
    ids = np.arange(V_size)[None, :]
    in_q = ((ids >= 1) & (ids < k[:, None])) | ((ids >= N) & (ids < N + (S - k)[:, None]))
    s = np.einsum("nv,nvd->nd", in_q.astype(np.float64), X)
    ok = sign * s.sum(axis=1) > 0 if enforce_condition else np.ones(n, dtype=bool)
    X, s = X[ok], s[ok]
    x_i = X[:, 0]
    if model.gamma == 0:
        z_i = x_i.copy()
    else:
        logits = np.einsum("nvd,nd->nv", X, s)
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        f = p[:, 0] / p.sum(axis=1)
        z_i = x_i + model.gamma * (1.0 - f)[:, None] * s
    return gnb_classify(x_i) == cls, gnb_classify(z_i) == cls, int(n - ok.sum())


def mc_effectiveness_gain(model: TheoryModel, V_size=20, enforce_condition=True, batch=20_000):
    """Naive-Bayes accuracy on raw features versus after one filling step.

    ``model.trials`` accepted trials are pooled over both classes (half with
    a class-1 missing node, the rest with the mirrored class-0 case). With
    ``enforce_condition`` a trial whose query sum points to the wrong
    class is discarded and redrawn.
    """
    if V_size < 2 * model.S or V_size % 2:
        raise ValueError("V_size must be even and hold S nodes of each class")
    rng = np.random.default_rng(model.seed)
    cx, cz, resampled = [], [], 0
    for cls, want in ((1, model.trials // 2), (0, model.trials - model.trials // 2)):
        got = 0
        while got < want:
            a, b, r = _effectiveness_batch(rng, model, V_size, cls, min(batch, want - got), enforce_condition)
            a, b = a[: want - got], b[: want - got]
            cx.append(a)
            cz.append(b)
            got += a.size
            resampled += r
    cx, cz = np.concatenate(cx), np.concatenate(cz)
    return EffectivenessResult(float(cx.mean()), float(cz.mean()), cx, cz, resampled)


# ---------------------------------------------------------------------------
# SVD solution separating completing nodes
# ---------------------------------------------------------------------------

@dataclass
class ReasonableSolution:
    Z: np.ndarray
    Q: np.ndarray
    rank: int
    queries: list
    B: np.ndarray
    margin: float
    violations: list  # (completing node, other node, query index) triples that fail

    @property
    def ok(self):
        return not self.violations


def query_sets(hyperedges):
    """Distinct query subsets (sorted tuples) and, per query, the nodes that complete it."""
    edges = {frozenset(e) for e in hyperedges}
    completions = {}
    for e in edges:
        if len(e) < 2:
            continue
        for v in e:
            q = tuple(sorted(e - {v}))
            completions.setdefault(q, set()).add(v)
    queries = sorted(completions)
    return queries, [completions[q] for q in queries]


def reasonable_solution(hg: Hypergraph, tol=0.0):
    """``Z = U Sigma`` and ``Q = V`` from the thin SVD of the completion indicator matrix.

    ``B[i, j] = 1`` when node ``i`` completes query ``j`` into a hyperedge.
    The margin is the smallest gap, over queries, between the lowest score of
    a completing node and the highest score of any other node; a pair whose
    gap is not above ``tol`` is listed as a violation.
    """
    queries, completions = query_sets(hg.hyperedges)
    if not queries:
        raise ValueError("need at least one hyperedge with two or more members")
    n = hg.num_nodes
    B = np.zeros((n, len(queries)))
    for j, S_j in enumerate(completions):
        B[sorted(S_j), j] = 1.0
    U, sig, Vt = np.linalg.svd(B, full_matrices=False)
    cutoff = sig[0] * max(B.shape) * np.finfo(np.float64).eps
    r = int(np.sum(sig > cutoff))
    Z = U[:, :r] * sig[:r]
    Q = Vt[:r].T
    scores = Z @ Q.T
    margin = np.inf
    violations = []
    for j, S_j in enumerate(completions):
        inside = sorted(S_j)
        outside = [k for k in range(n) if k not in S_j]
        if not outside:
            continue
        gap = scores[inside, j].min() - scores[outside, j].max()
        margin = min(margin, gap)
        if gap <= tol:
            for i in inside:
                for k in outside:
                    if scores[i, j] - scores[k, j] <= tol:
                        violations.append((i, k, j))
    return ReasonableSolution(Z, Q, r, queries, B, float(margin), violations)


def _grid_cell(args):
    S, d, P, trials, seed, N = args
    est, se = mc_condition_prob(TheoryModel(N=max(N, S), d=d, P=P, S=S, trials=trials, seed=seed))
    return {"S": S, "d": d, "P": P, "closed_form": closed_form_condition_prob(S, d, P),
            "mc_estimate": est, "mc_stderr": se}


def theory_grid(S_values, d_values, P_values, trials, seed=0, N=10, workers=1):
    """Rows ``(S, d, P, closed_form, mc_estimate, mc_stderr)``, one independent stream per cell.

    Results do not depend on ``workers``; cells are returned in grid order.
    """
    cells = [(S, d, P) for S in S_values for d in d_values for P in P_values]
    seeds = [int(ss.generate_state(1, np.uint64)[0])
             for ss in np.random.SeedSequence(seed).spawn(len(cells))]
    jobs = [(S, d, P, trials, sd, N) for (S, d, P), sd in zip(cells, seeds)]
    if workers <= 1:
        return [_grid_cell(job) for job in jobs]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_grid_cell, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


__all__ = [
    "EffectivenessResult", "ReasonableSolution", "TheoryModel", "closed_form_condition_prob",
    "filling_prob_raw", "filling_probabilities_raw", "gnb_classify",
    "mc_condition_prob", "mc_effectiveness_gain", "normal_cdf", "query_sets",
    "reasonable_solution", "theory_grid", "update_representation",
]
