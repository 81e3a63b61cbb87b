"""Downstream evaluation: node classification and hyperedge prediction."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.stats import rankdata

from hypeboy import diffnum as dn
from hypeboy import kernels
from hypeboy.diffnum import Adam, Parameter
from hypeboy.encoder import EncoderParams, HeadParams, Incidence, affine, encode, init_affine

RESULT_COLUMNS = ("method", "task", "seed", "split_id", "metric", "value")


class EdgeSample(NamedTuple):
    nodes: tuple[int, ...]
    label: int  # 1 positive, 0 negative


def accuracy(pred, labels):
    return float(np.mean(np.asarray(pred) == np.asarray(labels)))


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under row softmax."""
    logp = dn.log_softmax_row(logits)
    return dn.scale(dn.mean_all(dn.take(logp, np.arange(len(labels)), labels)), -1.0)


def _check_splits(splits):
    train, valid, test = (np.asarray(s, dtype=np.int64) for s in splits)
    for name, s in zip(("train", "valid", "test"), (train, valid, test)):
        if len(s) == 0:
            raise ValueError(f"{name} split is empty")
    return train, valid, test


def _is_checkpoint(epoch, epochs, eval_every):
    """Validation happens after every ``eval_every`` epochs; with fewer total epochs, once at the end."""
    if epochs < eval_every:
        return epoch == epochs
    return epoch > 0 and epoch % eval_every == 0


class _BestCheckpoint:
    """Keeps the test metric at the epoch with the highest validation metric (earliest on ties)."""

    def __init__(self):
        self.valid = -np.inf
        self.test = None
        self.epoch = None

    def offer(self, epoch, valid, test_fn):
        if valid > self.valid:
            self.valid, self.test, self.epoch = valid, test_fn(), epoch


def linear_probe(Z, labels, splits, epochs=200, lr=1e-3, seed=0, eval_every=10, weight_decay=1e-6):
    """Test accuracy of a softmax regression trained on frozen embeddings.

    Weights start at zero; ``seed`` is accepted for interface symmetry and
    has no effect because full-batch training is deterministic.
    """
    Z = np.array(Z, dtype=np.float64)  # private copy, caller's array untouched
    labels = np.asarray(labels, dtype=np.int64)
    train, valid, test = _check_splits(splits)
    n_classes = int(labels.max()) + 1
    W = Parameter(np.zeros((Z.shape[1], n_classes)), name="probe.W")
    b = Parameter(np.zeros(n_classes), name="probe.b")
    opt = Adam([W, b], lr=lr, weight_decay=weight_decay)

    def predict(idx):
        return np.argmax(Z[idx] @ W.value + b.value, axis=1)

    best = _BestCheckpoint()
    for epoch in range(epochs + 1):
        if _is_checkpoint(epoch, epochs, eval_every):
            best.offer(epoch, accuracy(predict(valid), labels[valid]),
                       lambda: accuracy(predict(test), labels[test]))
        if epoch == epochs:
            break
        loss = cross_entropy(affine(Z[train], (W, b)), labels[train])
        opt.zero_grad()
        dn.backward(loss)
        opt.step()
    return best.test


def fine_tune(X, hyperedges, pretrained, labels, splits, epochs=200, lr=1e-3, seed=0,
              hidden=128, embed_dim=128, dropout=0.5, eval_every=10, weight_decay=1e-6):
    """Test accuracy after training encoder and a linear head jointly on the train nodes.

    ``pretrained`` is an :class:`EncoderParams` whose values initialise the
    encoder (they are copied, not modified), or ``None`` for a random
    initialisation drawn from ``seed``.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    train, valid, test = _check_splits(splits)
    n_classes = int(labels.max()) + 1
    enc_ss, head_ss, drop_ss = np.random.SeedSequence(seed).spawn(3)
    if pretrained is None:
        encoder = EncoderParams(X.shape[1], hidden, embed_dim, dropout, seed=enc_ss)
    else:
        if pretrained.in_dim != X.shape[1]:
            raise ValueError(f"encoder expects {pretrained.in_dim} features, data has {X.shape[1]}")
        encoder = EncoderParams(pretrained.in_dim, pretrained.layers[0][0].shape[1],
                                pretrained.out_dim, dropout, seed=enc_ss)
        for dst, src in zip(encoder.parameters(), pretrained.parameters()):
            dst.value = src.value.copy()
    head = init_affine(np.random.default_rng(head_ss), encoder.out_dim, n_classes, "classifier")
    params = encoder.parameters() + list(head)
    opt = Adam(params, lr=lr, weight_decay=weight_decay)
    inc = Incidence.build([tuple(e) for e in hyperedges], X.shape[0])
    rng = np.random.default_rng(drop_ss)

    def predict(idx):
        logits = affine(encode(X, inc, encoder, train_mode=False), head).value
        return np.argmax(logits[idx], axis=1)

    best = _BestCheckpoint()
    for epoch in range(epochs + 1):
        if _is_checkpoint(epoch, epochs, eval_every):
            pred_all = predict(np.arange(X.shape[0]))
            best.offer(epoch, accuracy(pred_all[valid], labels[valid]),
                       lambda: accuracy(pred_all[test], labels[test]))
        if epoch == epochs:
            break
        Z = encode(X, inc, encoder, train_mode=True, rng=rng)
        loss = cross_entropy(dn.gather_rows(affine(Z, head), train), labels[train])
        opt.zero_grad()
        dn.backward(loss)
        opt.step()
    return best.test


# ---------------------------------------------------------------------------
# hyperedge prediction
# ---------------------------------------------------------------------------

def sample_negative_hyperedges(reference, count, num_nodes, seed):
    """Size-matched negatives: size from the empirical size distribution, members uniform."""
    sizes = np.array([len(e) for e in reference], dtype=np.int64)
    if len(sizes) == 0:
        raise ValueError("reference hyperedge set is empty")
    if sizes.min() > num_nodes:
        raise ValueError("every reference size exceeds the node count")
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        size = int(sizes[rng.integers(len(sizes))])
        if size > num_nodes:
            continue
        members = np.sort(rng.choice(num_nodes, size=size, replace=False))
        out.append(EdgeSample(tuple(int(v) for v in members), 0))
    return out


def hyperedge_embedding(Z, edge):
    """Coordinate-wise max minus min over the member rows."""
    if len(edge) == 0:
        raise ValueError("empty hyperedge")
    rows = np.asarray(Z, dtype=np.float64)[list(edge)]
    return rows.max(axis=0) - rows.min(axis=0)


def maxmin_embeddings(Z, edges):
    """:func:`hyperedge_embedding` for many hyperedges via the incidence kernel."""
    groups = dn.Groups.from_lists([tuple(e) for e in edges], np.shape(Z)[0])
    if np.any(groups.sizes() == 0):
        raise ValueError("empty hyperedge")
    return kernels.segment_maxmin(groups.indptr, groups.indices, Z)


def _u_statistic_x2(scores, labels):
    """Twice the Mann-Whitney U of the positives (an exact integer), with tie midranks."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC undefined: need both positive and negative samples")
    ranks_x2 = np.rint(2.0 * rankdata(scores, method="average")).astype(np.int64)
    return int(ranks_x2[labels].sum()) - n_pos * (n_pos + 1), n_pos, n_neg


def auroc(scores, labels):
    """Probability a positive outscores a negative, ties counting one half."""
    u2, n_pos, n_neg = _u_statistic_x2(scores, labels)
    return u2 / (2 * n_pos * n_neg)


def hyperedge_prediction(Z, hyperedges, edge_splits, seed=0, epochs=200, lr=1e-3, hidden=128,
                         dropout=0.5, eval_every=10, weight_decay=1e-6):
    """Test AUROC of an MLP on max-min embeddings of positives and size-matched negatives.

    Negatives for every split are drawn once (one stream per split derived
    from ``seed``) with the size distribution of the full hyperedge set.
    """
    Z = np.asarray(Z, dtype=np.float64)
    hyperedges = [tuple(e) for e in hyperedges]
    neg_ss, init_ss, drop_ss = np.random.SeedSequence(seed).spawn(3)
    data = []
    for split_ss, idx in zip(neg_ss.spawn(3), edge_splits):
        pos = [hyperedges[int(j)] for j in idx]
        if not pos:
            raise ValueError("hyperedge split is empty")
        neg = [s.nodes for s in sample_negative_hyperedges(hyperedges, len(pos), Z.shape[0], split_ss)]
        feats = maxmin_embeddings(Z, pos + neg)
        y = np.concatenate([np.ones(len(pos), dtype=np.int64), np.zeros(len(neg), dtype=np.int64)])
        data.append((feats, y))
    (x_tr, y_tr), (x_va, y_va), (x_te, y_te) = data

    head = HeadParams(Z.shape[1], 2, hidden=hidden, seed=init_ss, name="edge_mlp")
    opt = Adam(head.parameters(), lr=lr, weight_decay=weight_decay)
    rng = np.random.default_rng(drop_ss)
    keep = 1.0 - dropout

    def scores(x):
        logits = head(x).value
        return logits[:, 1] - logits[:, 0]

    best = _BestCheckpoint()
    for epoch in range(epochs + 1):
        if _is_checkpoint(epoch, epochs, eval_every):
            best.offer(epoch, auroc(scores(x_va), y_va), lambda: auroc(scores(x_te), y_te))
        if epoch == epochs:
            break
        h = dn.rectify(affine(x_tr, head.layers[0]))
        if dropout > 0:
            h = dn.dropout_mask_apply(h, (rng.random(h.shape) < keep) / keep)
        loss = cross_entropy(affine(h, head.layers[1]), y_tr)
        opt.zero_grad()
        dn.backward(loss)
        opt.step()
    return best.test


# ---------------------------------------------------------------------------
# result files
# ---------------------------------------------------------------------------

def write_results_csv(path, rows):
    """Rows are mappings with keys :data:`RESULT_COLUMNS`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in RESULT_COLUMNS})


def summarize(rows):
    """Mean and population standard deviation per (method, task, metric)."""
    groups = {}
    for row in rows:
        groups.setdefault((row["method"], row["task"], row["metric"]), []).append(float(row["value"]))
    return [
        {"method": m, "task": t, "metric": k, "n": len(v),
         "mean": float(np.mean(v)), "std": float(np.std(v))}
        for (m, t, k), v in sorted(groups.items())
    ]


def write_summary_json(path, rows):
    Path(path).write_text(json.dumps(summarize(rows), indent=2, sort_keys=True) + "\n", encoding="utf-8")
