import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradutil import gradcheck
from kae import ndiff as nd
from kae.ndiff.functional import attention_weights

TOL = 1e-6


def arr(rng, *shape, positive=False):
    x = rng.standard_normal(shape)
    return np.abs(x) + 0.5 if positive else x


UNARY = {
    "exp": lambda a: nd.exp(a).sum(),
    "log": lambda a: nd.log(a).sum(),
    "sqrt": lambda a: nd.sqrt(a).sum(),
    "power": lambda a: nd.power(a, 3.0).sum(),
    "mean": lambda a: (nd.mean(a, axis=0) * nd.mean(a, axis=0)).sum(),
    "reshape": lambda a: (a.reshape(-1) ** 2).sum(),
    "transpose": lambda a: (nd.transpose(a) @ a).sum(),
    "getitem": lambda a: (a[np.array([0, 0, 1])] * 2.0).sum(),
    "softmax": lambda a: (nd.softmax(a, axis=-1) * np.arange(a.shape[-1])).sum(),
    "log_softmax": lambda a: (nd.log_softmax(a, axis=-1) * np.arange(a.shape[-1])).sum(),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name, rng):
    x = arr(rng, 3, 4, positive=name in ("log", "sqrt"))
    assert gradcheck(UNARY[name], [x]) < TOL


BINARY = {
    "add_broadcast": lambda a, b: ((a + b) ** 2).sum(),
    "sub": lambda a, b: ((a - b) * (a - b)).sum(),
    "mul_broadcast": lambda a, b: (a * b * a).sum(),
    "div": lambda a, b: (a / (b * b + 1.0)).sum(),
    "matmul": lambda a, b: ((a @ nd.transpose(b)) ** 2).sum(),
    "concat": lambda a, b: (nd.concat([a, b], axis=0) ** 3).sum(),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_gradients(name, rng):
    a = arr(rng, 3, 4)
    b = arr(rng, 1, 4) if "broadcast" in name else arr(rng, 3, 4)
    assert gradcheck(BINARY[name], [a, b]) < TOL


def test_relu_away_from_kink(rng):
    x = arr(rng, 4, 5)
    x[np.abs(x) < 0.05] = 0.3
    assert gradcheck(lambda a: (nd.relu(a) * a).sum(), [x]) < TOL


def test_layer_norm_gradient(rng):
    x, g, b = arr(rng, 2, 3, 6), arr(rng, 6), arr(rng, 6)
    w = rng.standard_normal((2, 3, 6))
    assert gradcheck(lambda x, g, b: (nd.layer_norm(x, g, b) * w).sum(), [x, g, b]) < TOL


@pytest.mark.parametrize("masked", [False, True])
def test_attention_gradient(masked, rng):
    q, k, v = arr(rng, 2, 3, 4), arr(rng, 2, 5, 4), arr(rng, 2, 5, 4)
    mask = None
    if masked:
        mask = np.zeros((3, 5), dtype=bool)
        mask[:, 3:] = True
    w = rng.standard_normal((2, 3, 4))
    assert gradcheck(lambda q, k, v: (nd.scaled_dot_attention(q, k, v, mask) * w).sum(), [q, k, v]) < TOL


def test_attention_matches_explicit_softmax(rng):
    q, k = rng.standard_normal((3, 4)), rng.standard_normal((5, 4))
    mask = np.array([False, True, False, False, True])
    a = attention_weights(q, k, mask)
    s = q @ k.T / 2.0
    e = np.exp(s - s.max(axis=1, keepdims=True)) * ~mask
    np.testing.assert_allclose(a, e / e.sum(axis=1, keepdims=True), rtol=1e-12)
    assert np.all(a[:, mask] == 0)


def test_fully_masked_row_rejected(rng):
    with pytest.raises(ValueError):
        attention_weights(rng.standard_normal((2, 4)), rng.standard_normal((3, 4)), np.ones((2, 3), bool))


def test_embedding_gradient_accumulates_repeats(rng):
    w = nd.parameter(rng.standard_normal((5, 3)))
    out = nd.embedding(w, np.array([[1, 1, 4]])).sum()
    nd.reverse_accumulate(out)
    assert w.grad[1].tolist() == [2.0, 2.0, 2.0]
    assert w.grad[4].tolist() == [1.0, 1.0, 1.0]
    assert np.all(w.grad[[0, 2, 3]] == 0)


def test_pick_gathers_last_axis(rng):
    lp = rng.standard_normal((2, 3, 4))
    labels = np.array([[0, 3, 1], [2, 2, 0]])
    got = nd.pick(nd.constant(lp), labels).data
    np.testing.assert_array_equal(got, np.take_along_axis(lp, labels[..., None], -1)[..., 0])


def test_reverse_accumulate_needs_scalar(rng):
    with pytest.raises(ValueError):
        nd.reverse_accumulate(nd.parameter(rng.standard_normal(3)) * 2.0)


def test_no_grad_records_nothing(rng):
    x = nd.parameter(rng.standard_normal(3))
    with nd.no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad


def test_shared_subexpression_gradient(rng):
    x = arr(rng, 4)
    assert gradcheck(lambda a: ((a * a) + (a * a) * a).sum(), [x]) < TOL


def test_dropout_identity_at_eval(rng):
    x = nd.constant(rng.standard_normal(10))
    assert nd.dropout(x, 0.5, rng, training=False) is x


def test_adam_matches_reference_update():
    p = nd.parameter(np.array([1.0, -2.0]))
    opt = nd.Adam({"p": p}, lr=0.1)
    p.grad = np.array([0.5, -1.0])
    assert opt.step()
    # first step moves each coordinate by lr * sign(g)
    np.testing.assert_allclose(p.data, [0.9, -1.9], rtol=1e-7)


def test_adam_rejects_non_finite():
    p = nd.parameter(np.array([1.0]))
    opt = nd.Adam({"p": p})
    p.grad = np.array([np.nan])
    assert not opt.step()
    assert p.data.tolist() == [1.0] and opt.step_count == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_matmul_chain_gradient_property(n, m, seed):
    r = np.random.default_rng(seed)
    a, b = r.standard_normal((n, m)), r.standard_normal((m, 3))
    assert gradcheck(lambda a, b: nd.log_softmax(a @ b, axis=-1).sum(), [a, b]) < 1e-5


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_softmax_rows_sum_to_one(n, seed):
    x = np.random.default_rng(seed).standard_normal((3, n)) * 10
    s = nd.softmax(nd.constant(x)).data
    np.testing.assert_allclose(s.sum(axis=1), 1.0, rtol=1e-12)
