import numpy as np
import pytest
from gradcheck import relative_errors
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hypeboy import diffnum as dn
from hypeboy.diffnum import Adam, Groups, NonFiniteError, Parameter


def param(rng, *shape, name="p"):
    return Parameter(rng.uniform(-1, 1, size=shape), name=name)


GROUPS = Groups.from_lists([(0, 1), (1, 2, 3), (), (4,), (0, 4, 2)], 5)


@pytest.mark.parametrize("build", [
    lambda A, B, w: dn.sum_all(dn.matmul(A, B)),
    lambda A, B, w: dn.sum_all(dn.matmul(dn.transpose(B), dn.transpose(A))),
    lambda A, B, w: dn.mean_all(dn.rectify(dn.add_bias(dn.matmul(A, B), w))),
    lambda A, B, w: dn.sum_all(dn.sub(dn.add(A, A), dn.scale(A, 0.3))),
    lambda A, B, w: dn.sum_all(dn.matmul(dn.row_normalize(A), B)),
    lambda A, B, w: dn.sum_all(dn.cosine_rows(A, dn.matmul(A, dn.matmul(B, dn.transpose(B))))),
    lambda A, B, w: dn.sum_all(dn.take(dn.log_softmax_row(dn.matmul(A, B)), [0, 1, 4], [2, 0, 1])),
    lambda A, B, w: dn.sum_all(dn.matmul(dn.segment_sum(A, GROUPS), B)),
    lambda A, B, w: dn.sum_all(dn.matmul(dn.segment_mean(A, GROUPS), B)),
    lambda A, B, w: dn.sum_all(dn.matmul(dn.segment_mean(A, GROUPS.transpose()), B)),
    lambda A, B, w: dn.sum_all(dn.matmul(dn.gather_rows(A, [3, 3, 0]), B)),
], ids=["matmul", "transpose", "bias-rectify-mean", "add-sub-scale", "row_normalize", "cosine",
        "log_softmax-take", "segment_sum", "segment_mean", "segment_mean-T", "gather"])
def test_primitive_gradients(rng, build):
    A = param(rng, 5, 4, name="A")
    B = param(rng, 4, 3, name="B")
    w = param(rng, 3, name="w")
    errs = relative_errors(lambda: build(A, B, w), [A, B, w])
    assert max(errs.values()) <= 1e-4, errs


def test_masked_assign_token_gradient(rng):
    X = rng.uniform(-1, 1, size=(5, 3))
    tok = param(rng, 3, name="tok")
    W = param(rng, 3, 2, name="W")
    mask = np.array([True, False, True, False, False])
    errs = relative_errors(lambda: dn.sum_all(dn.rectify(dn.matmul(dn.masked_assign(X, mask, tok), W))), [tok, W])
    assert max(errs.values()) <= 1e-4
    g = dn.grad(dn.sum_all(dn.masked_assign(X, np.zeros(5, bool), tok)), [tok])[0]
    assert np.all(g == 0)


def test_dropout_mask_gradient(rng):
    A = param(rng, 4, 3, name="A")
    mask = (rng.random((4, 3)) < 0.5) / 0.5
    g = dn.grad(dn.sum_all(dn.dropout_mask_apply(A, mask)), [A])[0]
    np.testing.assert_array_equal(g, mask)


def test_matmul_identity(rng):
    A = rng.standard_normal((3, 4))
    np.testing.assert_array_equal(dn.matmul(np.eye(3), A).value, A)
    with pytest.raises(ValueError):
        dn.matmul(A, A)


def test_log_softmax_constant_row():
    out = dn.log_softmax_row(np.full((2, 7), 3.3)).value
    np.testing.assert_allclose(out, np.log(1 / 7), rtol=0, atol=1e-15)


@given(arrays(np.float64, (3, 6), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_log_softmax_normalised_and_shift_invariant(a, c):
    out = dn.log_softmax_row(a).value
    np.testing.assert_allclose(np.exp(out).sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(dn.log_softmax_row(a + c).value, out, atol=1e-9)


def test_log_softmax_large_values_stay_finite():
    out = dn.log_softmax_row(np.array([[1000.0, 0.0, -1000.0]])).value
    assert np.all(np.isfinite(out))


def test_segment_mean_example():
    X = np.array([[1.0, 0], [3, 2], [5, 4]])
    out = dn.segment_mean(X, Groups.from_lists([(0, 1), (1, 2), ()], 3)).value
    np.testing.assert_array_equal(out, [[2, 1], [4, 3], [0, 0]])


def test_row_normalize_rejects_zero_row():
    with pytest.raises(ValueError):
        dn.row_normalize(np.array([[1.0, 0], [0, 0]]))


def test_cosine_zero_row_is_zero():
    c = dn.cosine_rows(np.array([[0.0, 0], [1, 0]]), np.array([[1.0, 1], [0, 1]])).value
    np.testing.assert_array_equal(c, [0, 0])


def test_cosine_orthogonal_gradient_is_other_vector():
    h = Parameter(np.array([[1.0, 0, 0]]), name="h")
    q = np.array([[0.0, 1, 0]])
    g = dn.grad(dn.sum_all(dn.cosine_rows(h, q)), [h])[0]
    np.testing.assert_allclose(g, q, atol=1e-15)


def test_linear_map_gradient():
    W = Parameter(np.ones((2, 3)), name="W")
    x = np.array([[1.0, 2.0]])
    g = dn.grad(dn.sum_all(dn.matmul(x, W)), [W])[0]
    np.testing.assert_array_equal(g, [[1, 1, 1], [2, 2, 2]])


def test_grad_rejects_non_scalar():
    W = Parameter(np.ones((2, 2)))
    with pytest.raises(ValueError):
        dn.grad(dn.matmul(W, W), [W])


def test_gradients_are_deterministic(rng):
    A = param(rng, 5, 4, name="A")
    B = param(rng, 4, 3, name="B")

    def loss():
        return dn.sum_all(dn.log_softmax_row(dn.matmul(dn.segment_mean(A, GROUPS), B)))

    g1 = dn.grad(loss(), [A, B])
    g2 = dn.grad(loss(), [A, B])
    for a, b in zip(g1, g2):
        assert a.tobytes() == b.tobytes()


def test_non_finite_values_raise():
    with pytest.raises(NonFiniteError), np.errstate(over="ignore"):
        dn.scale(np.array([[1e308]]), 10.0)


def test_adam_zero_gradient_no_decay_is_noop():
    p = Parameter(np.array([1.5, -2.0]))
    opt = Adam([p], weight_decay=0.0)
    for _ in range(5):
        opt.zero_grad()
        opt.step()
    np.testing.assert_array_equal(p.value, [1.5, -2.0])


def test_adam_first_step_moves_by_lr():
    p = Parameter(np.array(0.0))
    dn.adam_step([p], [np.array(1.0)], lr=1e-3, weight_decay=0.0)
    assert p.value == pytest.approx(-1e-3, rel=1e-6)


def test_adam_constant_gradient_step_tends_to_lr():
    p = Parameter(np.array(0.0))
    state = None
    prev = 0.0
    for _ in range(500):
        state = dn.adam_step([p], [np.array(0.7)], state=state, lr=1e-2, weight_decay=0.0)
        step, prev = prev - float(p.value), float(p.value)
    assert step == pytest.approx(1e-2, rel=1e-6)


def test_adam_decoupled_decay():
    p = Parameter(np.array(2.0))
    dn.adam_step([p], [np.array(0.0)], lr=0.1, weight_decay=0.5)
    assert float(p.value) == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_adam_rejects_non_finite_gradient():
    p = Parameter(np.array([1.0]))
    with pytest.raises(NonFiniteError):
        dn.adam_step([p], [np.array([np.nan])])
