"""Mean-pooling hypergraph encoder and the node / set projection heads."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hypeboy import diffnum as dn
from hypeboy.diffnum import Groups, Parameter

CHECKPOINT_FORMAT = "hypeboy-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True, eq=False)
class Incidence:
    """Node/hyperedge membership in both directions for one hyperedge set."""

    edge_members: Groups   # per hyperedge: member nodes
    node_edges: Groups     # per node: incident hyperedges

    @classmethod
    def build(cls, hyperedges, num_nodes):
        edge_members = Groups.from_lists(hyperedges, num_nodes)
        return cls(edge_members, edge_members.transpose())

    @property
    def num_nodes(self):
        return self.edge_members.n_members


def init_affine(rng, fan_in, fan_out, name):
    bound = 1.0 / np.sqrt(fan_in)
    W = Parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out)), name=f"{name}.W")
    b = Parameter(rng.uniform(-bound, bound, size=fan_out), name=f"{name}.b")
    return W, b


def affine(x, layer):
    W, b = layer
    return dn.add_bias(dn.matmul(x, W), b)


class EncoderParams:
    """Two mean-pooling convolution layers: ``in_dim -> hidden -> out_dim``."""

    def __init__(self, in_dim, hidden=128, out_dim=128, dropout=0.5, seed=0, name="encoder"):
        rng = np.random.default_rng(seed)
        self.dropout = dropout
        self.layers = [init_affine(rng, in_dim, hidden, f"{name}.0"),
                       init_affine(rng, hidden, out_dim, f"{name}.1")]

    @property
    def in_dim(self):
        return self.layers[0][0].shape[0]

    @property
    def out_dim(self):
        return self.layers[-1][0].shape[1]

    def parameters(self):
        return [p for layer in self.layers for p in layer]


class HeadParams:
    """Affine, rectifier, affine."""

    def __init__(self, in_dim, out_dim=None, hidden=None, seed=0, name="head"):
        rng = np.random.default_rng(seed)
        out_dim = in_dim if out_dim is None else out_dim
        hidden = out_dim if hidden is None else hidden
        self.layers = [init_affine(rng, in_dim, hidden, f"{name}.0"),
                       init_affine(rng, hidden, out_dim, f"{name}.1")]

    def parameters(self):
        return [p for layer in self.layers for p in layer]

    def __call__(self, x):
        return affine(dn.rectify(affine(x, self.layers[0])), self.layers[1])


def encode(X, hyperedges, params: EncoderParams, train_mode=False, rng=None):
    """Node embeddings from features and a hyperedge set.

    Per layer: hyperedge vectors are means of member rows, each node takes
    the mean of its incident hyperedge vectors (zero if it has none), then
    an affine map follows, with a rectifier on all but the last layer.
    In ``train_mode`` each layer input is passed through inverted dropout
    with masks drawn from ``rng``.
    """
    X = dn.as_tensor(X)
    inc = hyperedges if isinstance(hyperedges, Incidence) else Incidence.build(hyperedges, X.shape[0])
    if inc.num_nodes != X.shape[0]:
        raise ValueError(f"features have {X.shape[0]} rows but hypergraph has {inc.num_nodes} nodes")
    if X.shape[1] != params.in_dim:
        raise ValueError(f"feature dim {X.shape[1]} != encoder input dim {params.in_dim}")
    if train_mode and params.dropout > 0 and rng is None:
        raise ValueError("train_mode with dropout needs an rng")

    h = X
    last = len(params.layers) - 1
    for k, layer in enumerate(params.layers):
        if train_mode and params.dropout > 0:
            keep = 1.0 - params.dropout
            mask = (rng.random(h.shape) < keep) / keep
            h = dn.dropout_mask_apply(h, mask)
        edge_vec = dn.segment_mean(h, inc.edge_members)
        h = affine(dn.segment_mean(edge_vec, inc.node_edges), layer)
        if k < last:
            h = dn.rectify(h)
    return h


def query_groups(instances, num_nodes) -> Groups:
    queries = [inst.query for inst in instances]
    if any(len(q) == 0 for q in queries):
        raise ValueError("empty query subset")
    return Groups.from_lists(queries, num_nodes)


def project_node(Z, head: HeadParams):
    return head(Z)


def project_set(Z, instances, head: HeadParams):
    """Set-head output on the summed embeddings of each query subset."""
    groups = instances if isinstance(instances, Groups) else query_groups(instances, Z.shape[0])
    return head(dn.segment_sum(Z, groups))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, arrays: dict, meta: dict | None = None):
    """Write named matrices as JSON: ``{"format", "version", "meta", "params": {name: {"shape", "data"}}}``.

    ``data`` is the row-major flattening; floats round-trip exactly.
    """
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "params": {
            name: {"shape": list(np.shape(a)), "data": np.asarray(a, dtype=np.float64).ravel().tolist()}
            for name, a in arrays.items()
        },
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path):
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a hypeboy checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    arrays = {name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
              for name, entry in payload["params"].items()}
    return arrays, payload.get("meta", {})
