"""Minimal reverse-mode differentiation over dense float64 matrices.

Each primitive returns a :class:`Tensor` holding its value and a closure
that maps the output adjoint to adjoints of its inputs. :func:`grad` walks
the recorded graph from a scalar output in reverse topological order.

The primitive set is deliberately small: it is exactly what the encoder,
projection heads, filling loss, warm-up loss and downstream classifiers
need.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hypeboy import kernels


class NonFiniteError(FloatingPointError):
    """A value or gradient became NaN or infinite."""


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Tensor{label} shape={self.value.shape}>"


class Parameter(Tensor):
    """Learnable leaf; ``grad`` has the value's shape and accumulates."""

    __slots__ = ()

    def __init__(self, value, name=None):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents, backward):
    if not np.all(np.isfinite(value)):
        raise NonFiniteError("primitive produced a non-finite value")
    needs = any(p.requires_grad for p in parents)
    return Tensor(value, parents if needs else (), backward if needs else None, needs)


@dataclass(frozen=True, eq=False)
class Groups:
    """Variable-size groups of row indices in CSR form.

    ``indices[indptr[g]:indptr[g + 1]]`` lists the member rows of group
    ``g``; members index a matrix with ``n_members`` rows.
    """

    indptr: np.ndarray
    indices: np.ndarray
    n_members: int

    @classmethod
    def from_lists(cls, lists, n_members):
        sizes = [len(g) for g in lists]
        indptr = np.zeros(len(lists) + 1, dtype=np.int64)
        np.cumsum(sizes, out=indptr[1:])
        flat = [int(v) for g in lists for v in g]
        indices = np.array(flat, dtype=np.int64)
        if len(flat) and (indices.min() < 0 or indices.max() >= n_members):
            raise ValueError("group member out of range")
        return cls(indptr, indices, int(n_members))

    def __len__(self):
        return len(self.indptr) - 1

    def sizes(self):
        return np.diff(self.indptr)

    def transpose(self) -> "Groups":
        """Groups indexed by member row, listing the groups each row belongs to (in group order)."""
        group_of = np.repeat(np.arange(len(self), dtype=np.int64), self.sizes())
        order = np.argsort(self.indices, kind="stable")
        counts = np.bincount(self.indices, minlength=self.n_members)
        indptr = np.zeros(self.n_members + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return Groups(indptr, group_of[order], len(self))


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    return _node(a.value @ b.value, (a, b),
                 lambda g: (g @ b.value.T, a.value.T @ g))


def transpose(a):
    a = as_tensor(a)
    return _node(a.value.T.copy(), (a,), lambda g: (g.T,))


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch {a.shape} + {b.shape}")
    return _node(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"sub shape mismatch {a.shape} - {b.shape}")
    return _node(a.value - b.value, (a, b), lambda g: (g, -g))


def scale(a, c: float):
    a = as_tensor(a)
    return _node(a.value * c, (a,), lambda g: (g * c,))


def add_bias(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if b.value.ndim != 1 or a.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"add_bias shape mismatch {a.shape} + {b.shape}")
    return _node(a.value + b.value, (a, b), lambda g: (g, g.sum(axis=0)))


def rectify(a):
    a = as_tensor(a)
    on = a.value > 0
    return _node(np.where(on, a.value, 0.0), (a,), lambda g: (g * on,))


def dropout_mask_apply(a, mask):
    """Multiply by a fixed mask (already scaled by ``1/(1-rate)``)."""
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != a.shape:
        raise ValueError("dropout mask shape mismatch")
    return _node(a.value * mask, (a,), lambda g: (g * mask,))


def row_normalize(a):
    a = as_tensor(a)
    norms = np.linalg.norm(a.value, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError(f"row_normalize: zero-norm row {int(np.flatnonzero(norms[:, 0] == 0)[0])}")
    y = a.value / norms

    def backward(g):
        return ((g - y * np.sum(y * g, axis=1, keepdims=True)) / norms,)

    return _node(y, (a,), backward)


def cosine_rows(a, b):
    """Cosine between matching rows of ``a`` and ``b``; a zero row gives 0."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or a.value.ndim != 2:
        raise ValueError(f"cosine_rows shape mismatch {a.shape} vs {b.shape}")
    na = np.linalg.norm(a.value, axis=1)
    nb = np.linalg.norm(b.value, axis=1)
    ok = (na > 0) & (nb > 0)
    denom = np.where(ok, na * nb, 1.0)
    cos = np.where(ok, np.sum(a.value * b.value, axis=1) / denom, 0.0)

    def backward(g):
        w = (g * ok)[:, None]
        sa = np.where(ok, na, 1.0)[:, None]
        sb = np.where(ok, nb, 1.0)[:, None]
        c = cos[:, None]
        ga = w * (b.value / (sa * sb) - c * a.value / sa**2)
        gb = w * (a.value / (sa * sb) - c * b.value / sb**2)
        return ga, gb

    return _node(cos, (a, b), backward)


def log_softmax_row(a):
    a = as_tensor(a)
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    soft = np.exp(out)
    return _node(out, (a,), lambda g: (g - soft * g.sum(axis=1, keepdims=True),))


def segment_sum(x, groups: Groups):
    x = as_tensor(x)
    if x.shape[0] != groups.n_members:
        raise ValueError(f"segment_sum expects {groups.n_members} rows, got {x.shape[0]}")
    out = kernels.segment_sum(groups.indptr, groups.indices, x.value)
    return _node(out, (x,),
                 lambda g: (kernels.scatter_add(groups.indptr, groups.indices, g, groups.n_members),))


def segment_mean(x, groups: Groups):
    """Mean of member rows per group; an empty group yields a zero row."""
    x = as_tensor(x)
    if x.shape[0] != groups.n_members:
        raise ValueError(f"segment_mean expects {groups.n_members} rows, got {x.shape[0]}")
    inv = 1.0 / np.maximum(groups.sizes(), 1)[:, None]
    out = kernels.segment_sum(groups.indptr, groups.indices, x.value) * inv
    return _node(out, (x,),
                 lambda g: (kernels.scatter_add(groups.indptr, groups.indices, g * inv, groups.n_members),))


def masked_assign(x, mask, token):
    """Replace the rows of ``x`` selected by boolean ``mask`` with ``token``."""
    x, token = as_tensor(x), as_tensor(token)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (x.shape[0],) or token.shape != (x.shape[1],):
        raise ValueError("masked_assign shape mismatch")
    out = x.value.copy()
    out[mask] = token.value

    def backward(g):
        gx = g.copy()
        gx[mask] = 0.0
        return gx, g[mask].sum(axis=0)

    return _node(out, (x, token), backward)


def gather_rows(a, idx):
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)

    def backward(g):
        ga = np.zeros_like(a.value)
        np.add.at(ga, idx, g)
        return (ga,)

    return _node(a.value[idx], (a,), backward)


def take(a, rows, cols):
    """Vector of entries ``a[rows[k], cols[k]]``."""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)

    def backward(g):
        ga = np.zeros_like(a.value)
        np.add.at(ga, (rows, cols), g)
        return (ga,)

    return _node(a.value[rows, cols], (a,), backward)


def sum_all(a):
    a = as_tensor(a)
    return _node(np.array(a.value.sum()), (a,), lambda g: (np.full_like(a.value, g),))


def mean_all(a):
    a = as_tensor(a)
    n = a.value.size
    return _node(np.array(a.value.sum() / n), (a,), lambda g: (np.full_like(a.value, g / n),))


# ---------------------------------------------------------------------------
# reverse sweep
# ---------------------------------------------------------------------------

def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node._parents):
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor):
    """Accumulate d(loss)/d(param) into ``.grad`` of every reachable Parameter."""
    if loss.value.ndim != 0:
        raise ValueError(f"backward needs a scalar output, got shape {loss.value.shape}")
    if not loss.requires_grad:
        return
    adj = {id(loss): np.ones(())}
    for node in reversed(_topological(loss)):
        g = adj.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            node.grad = node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            adj[key] = adj[key] + pg if key in adj else pg


def grad(loss: Tensor, params):
    """Exact gradients of scalar ``loss`` w.r.t. ``params`` (returned as copies)."""
    params = list(params)
    for p in params:
        p.zero_grad()
    backward(loss)
    return [p.grad.copy() for p in params]


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Adam with decoupled weight decay, applied to ``Parameter.grad``.

    The update for each parameter ``p`` at step ``t`` is
    ``p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)``.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-6):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        b1, b2 = self.betas
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise NonFiniteError(f"non-finite gradient for parameter {p.name!r}")
        self.t += 1
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * p.grad
            v *= b2
            v += (1.0 - b2) * p.grad**2
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.value
            p.value = p.value - self.lr * update


def adam_step(params, grads, state=None, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-6):
    """Functional form: one Adam update of ``params`` using explicit ``grads``.

    ``state`` is the :class:`Adam` returned by the previous call (``None`` on
    the first step); the updated state is returned.
    """
    params = list(params)
    if state is None:
        state = Adam(params, lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
    for p, g in zip(params, grads):
        p.grad = np.asarray(g, dtype=np.float64)
    state.step()
    return state
