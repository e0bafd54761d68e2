import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from deduce.errors import NumericalError
from deduce.nn_core import (
    AdamState,
    ParamStore,
    adam_step,
    dropout,
    dropout_backward,
    grad_check,
    layer_norm,
    layer_norm_backward,
    linear,
    linear_backward,
    relu,
    relu_backward,
    softmax_rows,
    softmax_rows_backward,
)
from oracles import numeric_grad


def test_linear_identity(rng):
    x = rng.normal(size=(4, 3))
    y, _ = linear(x, np.eye(3), np.zeros((1, 3)))
    np.testing.assert_array_equal(y, x)


def test_linear_worked_example():
    y, _ = linear(np.array([[1.0, 2.0]]), np.eye(2), np.array([[3.0, 4.0]]))
    np.testing.assert_array_equal(y, [[4.0, 6.0]])


def test_linear_shape_mismatch():
    with pytest.raises(ValueError):
        linear(np.ones((2, 3)), np.ones((4, 2)))
    with pytest.raises(ValueError):
        linear(np.ones((2, 3)), np.ones((3, 2)), np.ones((1, 5)))


def test_linear_backward_matches_finite_differences(rng):
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(4, 2))
    b = rng.normal(size=(1, 2))
    probe = rng.normal(size=(3, 2))

    def f():
        return float((linear(x, w, b)[0] * probe).sum())

    dx, dw, db = linear_backward(probe, linear(x, w, b)[1])
    for analytic, arr in ((dx, x), (dw, w), (db, b)):
        num = numeric_grad(f, arr)
        assert np.max(np.abs(analytic - num) / np.maximum(1e-8, np.abs(num))) <= 1e-4


def test_linear_backward_sums_leading_axes(rng):
    x = rng.normal(size=(2, 3, 4))
    w = rng.normal(size=(4, 5))
    dy = rng.normal(size=(2, 3, 5))
    dx, dw, db = linear_backward(dy, (x, w))
    np.testing.assert_allclose(dw, np.einsum("nmi,nmj->ij", x, dy))
    np.testing.assert_allclose(db[0], dy.sum((0, 1)))
    assert dx.shape == x.shape


def test_softmax_examples():
    y, _ = softmax_rows(np.array([[0.0, 0.0], [1000.0, 0.0]]))
    np.testing.assert_array_equal(y[0], [0.5, 0.5])
    assert abs(y[1, 0] - 1.0) <= 1e-12 and abs(y[1, 1]) <= 1e-12
    assert np.isfinite(y).all()


@settings(max_examples=80, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(-700, 700)))
def test_softmax_rows_sum_to_one(x):
    y, _ = softmax_rows(x)
    np.testing.assert_allclose(y.sum(1), 1.0, atol=1e-9)
    assert (y >= 0).all()


def test_softmax_backward(rng):
    x = rng.normal(size=(2, 5))
    probe = rng.normal(size=(2, 5))
    y, _ = softmax_rows(x)
    analytic = softmax_rows_backward(probe, y)
    num = numeric_grad(lambda: float((softmax_rows(x)[0] * probe).sum()), x)
    assert np.max(np.abs(analytic - num) / np.maximum(1e-8, np.abs(num))) <= 1e-4


def test_relu_backward(rng):
    x = rng.normal(size=(4, 4))
    probe = rng.normal(size=(4, 4))
    out, mask = relu(x)
    np.testing.assert_array_equal(out, np.maximum(x, 0))
    num = numeric_grad(lambda: float((relu(x)[0] * probe).sum()), x)
    np.testing.assert_allclose(relu_backward(probe, mask), num, atol=1e-8)


def test_layer_norm_forward(rng):
    x = rng.normal(size=(3, 6)) * 4 + 2
    y, _ = layer_norm(x, np.ones((1, 6)), np.zeros((1, 6)))
    np.testing.assert_allclose(y.mean(1), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(1), 1.0, rtol=1e-5)


def test_layer_norm_backward(rng):
    x = rng.normal(size=(2, 3, 5))
    g = rng.normal(size=(1, 5))
    b = rng.normal(size=(1, 5))
    probe = rng.normal(size=(2, 3, 5))
    dx, dg, db = layer_norm_backward(probe, layer_norm(x, g, b)[1])

    def f():
        return float((layer_norm(x, g, b)[0] * probe).sum())

    for analytic, arr in ((dx, x), (dg, g), (db, b)):
        num = numeric_grad(f, arr)
        assert np.max(np.abs(analytic - num) / np.maximum(1e-8, np.abs(num))) <= 1e-4


def test_dropout_identity_modes(rng):
    x = rng.normal(size=(3, 3))
    assert dropout(x, 0.5, training=False, rng=0)[0] is x
    assert dropout(x, 0.0, training=True, rng=0)[0] is x
    with pytest.raises(ValueError):
        dropout(x, 1.0, True, 0)


def test_dropout_unbiased():
    y, scale = dropout(np.ones((1, 10_000)), 0.5, training=True, rng=7)
    assert 0.94 <= y.mean() <= 1.06
    assert set(np.unique(y)) <= {0.0, 2.0}
    dy = np.ones_like(y)
    np.testing.assert_array_equal(dropout_backward(dy, scale) == 0, y == 0)


def _store(**arrays_):
    p = ParamStore()
    for k, v in arrays_.items():
        p.add(k, v)
    return p


def test_param_store_contract():
    p = _store(a=np.ones((2, 2)))
    with pytest.raises(KeyError):
        p.add("a", np.zeros(1))
    p.accumulate("a", np.full((2, 2), 3.0))
    assert p.grads["a"].sum() == 12.0
    q = p.copy()
    q["a"][0, 0] = 5.0
    assert p["a"][0, 0] == 1.0
    p.zero_grad()
    assert not p.grads["a"].any()
    assert p.n_parameters() == 4 and len(p) == 1 and "a" in p


def test_adam_first_step():
    p = _store(w=np.zeros((3, 3)))
    p.grads["w"][:] = 1.0
    adam_step(p, AdamState(), lr=0.001)
    np.testing.assert_allclose(p["w"], -0.001, atol=1e-6)
    assert not p.grads["w"].any()


def test_adam_zero_gradient_is_noop(rng):
    w = rng.normal(size=(2, 3))
    p = _store(w=w.copy())
    adam_step(p, AdamState(), lr=0.1)
    np.testing.assert_array_equal(p["w"], w)


def test_adam_weight_decay_shrinks():
    p = _store(w=np.array([[2.0, -3.0]]))
    adam_step(p, AdamState(), lr=0.1, weight_decay=0.5)
    np.testing.assert_allclose(p["w"], [[2.0 * 0.95, -3.0 * 0.95]])
    assert (np.abs(p["w"]) < [[2.0, 3.0]]).all()


def test_adam_matches_reference_over_steps(rng):
    # textbook Adam written out for a 1-D quadratic
    w0 = rng.normal(size=(1, 4))
    p = _store(w=w0.copy())
    st_ = AdamState()
    w, m, v = w0.copy(), np.zeros_like(w0), np.zeros_like(w0)
    for t in range(1, 6):
        g = 2 * w
        p.grads["w"][:] = 2 * p["w"]
        adam_step(p, st_, lr=0.01, weight_decay=0.1)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.01 * 0.1 * w
        w = w - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p["w"], w, rtol=1e-12)


def test_adam_deterministic(rng):
    w0 = rng.normal(size=(3, 2))
    g = rng.normal(size=(3, 2))
    outs = []
    for _ in range(2):
        p = _store(w=w0.copy())
        s = AdamState()
        for _ in range(3):
            p.grads["w"][:] = g
            adam_step(p, s, lr=0.01)
        outs.append(p["w"].copy())
    np.testing.assert_array_equal(*outs)


def test_grad_check_linear_sum(rng):
    x = rng.normal(size=(3, 4))
    p = _store(W=rng.normal(size=(4, 2)), b=rng.normal(size=(1, 2)))

    def f(ps):
        y, cache = linear(x, ps["W"], ps["b"])
        _, dw, db = linear_backward(np.ones_like(y), cache)
        ps.accumulate("W", dw)
        ps.accumulate("b", db)
        return float(y.sum())

    assert grad_check(f, p) <= 1e-6


def test_grad_check_constant():
    p = _store(a=np.ones((2, 2)))
    assert grad_check(lambda ps: 3.0, p) == 0.0


def test_grad_check_detects_wrong_gradient(rng):
    p = _store(a=rng.normal(size=(2, 2)))

    def f(ps):
        ps.accumulate("a", ps["a"])  # true gradient is 2a
        return float((ps["a"] ** 2).sum())

    assert grad_check(f, p) > 0.4


def test_grad_check_non_finite():
    p = _store(a=np.ones((1, 1)))
    with pytest.raises(NumericalError):
        grad_check(lambda ps: float("nan"), p)
