"""Hyperedge-filling self-supervised training.

Two stages: a masked feature-reconstruction warm-up for the encoder,
followed by hyperedge filling, where every (missing node, query subset)
split of every hyperedge is scored by a softmax over all nodes.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from hypeboy import diffnum as dn
from hypeboy.diffnum import Adam, NonFiniteError, Parameter
from hypeboy.encoder import (EncoderParams, HeadParams, Incidence, encode,
                             project_node, project_set, query_groups)

log = logging.getLogger(__name__)


class FillingInstance(NamedTuple):
    missing: int
    query: tuple[int, ...]
    edge: int


@dataclass(frozen=True)
class TrainConfig:
    p_v: float
    p_e: float
    filling_epochs: int
    warmup_epochs: int = 300
    warmup_mask_rate: float = 0.5
    warmup_p_e: float = 0.2
    lr: float = 1e-3
    warmup_lr: float = 1e-3
    weight_decay: float = 1e-6
    hidden: int = 128
    embed_dim: int = 128
    head_dim: int | None = None
    dropout: float = 0.5
    temperature: float = 1.0
    use_heads: bool = True
    fresh_augment: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("p_v", "p_e", "warmup_mask_rate", "warmup_p_e", "dropout"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.dropout >= 1.0:
            raise ValueError("dropout must be below 1")
        for name in ("filling_epochs", "warmup_epochs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


class ModelParams:
    """Encoder, both projection heads, and the warm-up decoder and tokens."""

    def __init__(self, in_dim, config: TrainConfig):
        enc_ss, node_ss, set_ss, dec_ss = np.random.SeedSequence(config.seed).spawn(4)
        k = config.head_dim or config.embed_dim
        self.encoder = EncoderParams(in_dim, config.hidden, config.embed_dim, config.dropout,
                                     seed=enc_ss, name="encoder")
        self.node_head = HeadParams(config.embed_dim, k, seed=node_ss, name="node_head")
        self.set_head = HeadParams(config.embed_dim, k, seed=set_ss, name="set_head")
        self.decoder = EncoderParams(config.embed_dim, config.hidden, in_dim, config.dropout,
                                     seed=dec_ss, name="decoder")
        self.input_token = Parameter(np.zeros(in_dim), name="input_token")
        self.embed_token = Parameter(np.zeros(config.embed_dim), name="embed_token")

    def warmup_parameters(self):
        return (self.encoder.parameters() + self.decoder.parameters()
                + [self.input_token, self.embed_token])

    def filling_parameters(self):
        return self.encoder.parameters() + self.node_head.parameters() + self.set_head.parameters()

    def all_parameters(self):
        return (self.encoder.parameters() + self.node_head.parameters() + self.set_head.parameters()
                + self.decoder.parameters() + [self.input_token, self.embed_token])

    def named_arrays(self):
        return {p.name: p.value.copy() for p in self.all_parameters()}

    def load_arrays(self, arrays):
        for p in self.all_parameters():
            if p.name not in arrays:
                continue
            value = np.asarray(arrays[p.name], dtype=np.float64)
            if value.shape != p.value.shape:
                raise ValueError(f"{p.name}: shape {value.shape} != {p.value.shape}")
            p.value = value.copy()
            p.zero_grad()


# ---------------------------------------------------------------------------
# augmentation and instances
# ---------------------------------------------------------------------------

def augment_features(X, p_v, seed):
    """Zero each entry independently with probability ``p_v``."""
    if not 0.0 <= p_v <= 1.0:
        raise ValueError("p_v must lie in [0, 1]")
    X = np.asarray(X, dtype=np.float64)
    rng = np.random.default_rng(seed)
    keep = rng.random(X.shape) < 1.0 - p_v
    return X * keep


def kept_edge_count(m, p_e):
    """``ceil(m * (1 - p_e))`` evaluated on the decimal value of ``p_e``."""
    return math.ceil(m * (1 - Fraction(repr(float(p_e)))))


def augment_hyperedges(hyperedges, p_e, seed):
    """Uniformly random subset of ``ceil(|E| (1 - p_e))`` hyperedges, original order kept."""
    if not 0.0 <= p_e <= 1.0:
        raise ValueError("p_e must lie in [0, 1]")
    hyperedges = list(hyperedges)
    k = kept_edge_count(len(hyperedges), p_e)
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(hyperedges), size=k, replace=False))
    return [hyperedges[j] for j in chosen]


def enumerate_instances(hyperedges):
    """One instance per member of every hyperedge with at least two members."""
    out = []
    for j, e in enumerate(hyperedges):
        if len(e) < 2:
            continue
        for v in e:
            out.append(FillingInstance(int(v), tuple(int(u) for u in e if u != v), j))
    return out


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def filling_logits(H, Q, temperature=1.0):
    """Cosine similarity of every query row against every node row (instances x nodes)."""
    logits = dn.matmul(dn.row_normalize(Q), dn.transpose(dn.row_normalize(H)))
    return logits if temperature == 1.0 else dn.scale(logits, 1.0 / temperature)


def filling_loss(H, Qproj, instances, temperature=1.0):
    """Negative log-likelihood of each missing node under a softmax over all nodes."""
    H, Qproj = dn.as_tensor(H), dn.as_tensor(Qproj)
    if Qproj.shape[0] != len(instances):
        raise ValueError("one projected query row per instance is required")
    if len(instances) == 0:
        return dn.Tensor(np.array(0.0))
    logp = dn.log_softmax_row(filling_logits(H, Qproj, temperature))
    missing = [inst.missing for inst in instances]
    return dn.scale(dn.sum_all(dn.take(logp, np.arange(len(instances)), missing)), -1.0)


def filling_probabilities(H, Qproj, temperature=1.0):
    """Matrix of filling probabilities (rows sum to one over nodes)."""
    logits = filling_logits(dn.as_tensor(H), dn.as_tensor(Qproj), temperature).value
    logits = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    return p / p.sum(axis=1, keepdims=True)


def hypeboy_loss(X_aug, edges_aug, params: ModelParams, instances, groups=None,
                 use_heads=True, temperature=1.0, rng=None, train_mode=True):
    """Filling loss for one augmented view; instances come from the full hyperedge set."""
    X_aug = np.asarray(X_aug, dtype=np.float64)
    Z = encode(X_aug, edges_aug, params.encoder, train_mode=train_mode, rng=rng)
    if groups is None:
        groups = query_groups(instances, X_aug.shape[0])
    if use_heads:
        H = project_node(Z, params.node_head)
        Q = project_set(Z, groups, params.set_head)
    else:
        H, Q = Z, dn.segment_sum(Z, groups)
    return filling_loss(H, Q, instances, temperature)


def reconstruction_loss(X_hat, X, masked):
    """Mean over masked rows of ``1 - cos(reconstruction, original)``; a zero row counts as 1."""
    idx = np.flatnonzero(masked)
    cos = dn.cosine_rows(dn.gather_rows(X_hat, idx), np.asarray(X, dtype=np.float64)[idx])
    return dn.sub(dn.Tensor(np.array(1.0)), dn.mean_all(cos))


def warmup_loss(X, edges_aug, params: ModelParams, masked, rng=None, train_mode=True):
    """Masked feature reconstruction through encoder, embedding token and decoder."""
    X = np.asarray(X, dtype=np.float64)
    masked = np.asarray(masked, dtype=bool)
    if not masked.any():
        raise ValueError("warm-up needs at least one masked node")
    inc = edges_aug if isinstance(edges_aug, Incidence) else Incidence.build(edges_aug, X.shape[0])
    X_in = dn.masked_assign(X, masked, params.input_token)
    Z = encode(X_in, inc, params.encoder, train_mode=train_mode, rng=rng)
    Z_in = dn.masked_assign(Z, masked, params.embed_token)
    X_hat = encode(Z_in, inc, params.decoder, train_mode=train_mode, rng=rng)
    return reconstruction_loss(X_hat, X, masked)


def warmup_epoch(X, hyperedges, params: ModelParams, config: TrainConfig, seed, optimizer: Adam):
    """One warm-up step: sample masked nodes and kept hyperedges, reconstruct, update."""
    rng = np.random.default_rng(seed)
    n = np.shape(X)[0]
    k = min(n, max(1, int(round(config.warmup_mask_rate * n))))
    masked = np.zeros(n, dtype=bool)
    masked[rng.choice(n, size=k, replace=False)] = True
    edges_aug = augment_hyperedges(hyperedges, config.warmup_p_e, rng)
    loss = warmup_loss(X, edges_aug, params, masked, rng=rng)
    optimizer.zero_grad()
    dn.backward(loss)
    optimizer.step()
    return float(loss.value)


def train(X, hyperedges, config: TrainConfig, history=None) -> ModelParams:
    """Warm up the encoder, then train encoder and heads on hyperedge filling.

    ``history``, if given, receives ``(epoch, stage, loss)`` tuples.
    """
    X = np.asarray(X, dtype=np.float64)
    hyperedges = [tuple(e) for e in hyperedges]
    params = ModelParams(X.shape[1], config)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(5)[4])

    if config.warmup_epochs:
        opt = Adam(params.warmup_parameters(), lr=config.warmup_lr, weight_decay=config.weight_decay)
        for epoch in range(config.warmup_epochs):
            loss = warmup_epoch(X, hyperedges, params, config, rng, opt)
            if not math.isfinite(loss):
                raise NonFiniteError(f"warm-up loss is not finite at epoch {epoch}")
            if history is not None:
                history.append((epoch, "warmup", loss))

    if config.filling_epochs:
        instances = enumerate_instances(hyperedges)
        if not instances:
            raise ValueError("no hyperedge with two or more members; nothing to fill")
        groups = query_groups(instances, X.shape[0])
        opt = Adam(params.filling_parameters(), lr=config.lr, weight_decay=config.weight_decay)
        fixed_view = None
        for epoch in range(config.filling_epochs):
            if config.fresh_augment or fixed_view is None:
                fixed_view = (augment_features(X, config.p_v, rng),
                              Incidence.build(augment_hyperedges(hyperedges, config.p_e, rng), X.shape[0]))
            X_aug, inc = fixed_view
            try:
                loss = hypeboy_loss(X_aug, inc, params, instances, groups, use_heads=config.use_heads,
                                    temperature=config.temperature, rng=rng)
            except NonFiniteError as exc:
                raise NonFiniteError(f"filling loss is not finite at epoch {epoch}") from exc
            opt.zero_grad()
            dn.backward(loss)
            opt.step()
            if history is not None:
                history.append((epoch, "filling", float(loss.value)))
            log.debug("filling epoch %d loss %.6f", epoch, float(loss.value))
    return params


def embed(X, hyperedges, params: ModelParams):
    """Evaluation-mode node embeddings on the unaugmented hypergraph."""
    return encode(np.asarray(X, dtype=np.float64), [tuple(e) for e in hyperedges],
                  params.encoder, train_mode=False).value
