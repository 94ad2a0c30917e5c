import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from liftpolicy import autodiff as ad
from liftpolicy.autodiff import DimensionError, NonFiniteError, Tensor, UsageError


def leaf(x):
    return Tensor(np.asarray(x, dtype=float), requires_grad=True)


def test_elementwise_values():
    np.testing.assert_array_equal(ad.add(Tensor([1, 2]), Tensor([3, 4])).data, [4, 6])
    x = Tensor([1.5, -2.0])
    np.testing.assert_array_equal(ad.sub(x, x).data, [0, 0])
    np.testing.assert_array_equal(ad.scale(Tensor([3, -1]), 0.5).data, [1.5, -0.5])
    np.testing.assert_array_equal(ad.relu(Tensor([-1, 2])).data, [0, 2])
    np.testing.assert_allclose(ad.mul(Tensor([2, 3]), 2.0).data, [4, 6])


def test_elementwise_shape_mismatch():
    with pytest.raises(DimensionError):
        ad.add(Tensor(np.ones(3)), Tensor(np.ones(4)))
    with pytest.raises(DimensionError):
        ad.mul(Tensor(np.ones((2, 3))), Tensor(np.ones(3)))


def test_matmul_values_and_errors():
    a = Tensor([[1, 2], [3, 4]])
    np.testing.assert_array_equal(ad.matmul(Tensor(np.eye(2)), a).data, a.data)
    np.testing.assert_array_equal(ad.matmul(Tensor([[1, 2]]), Tensor([[3], [4]])).data, [[11]])
    with pytest.raises(DimensionError):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_sum_gradient_is_row_sums_of_b():
    rng = np.random.default_rng(0)
    a, b = leaf(rng.standard_normal((3, 4))), Tensor(rng.standard_normal((4, 5)))
    ad.backward(ad.sum(ad.matmul(a, b)))
    np.testing.assert_allclose(a.grad, np.broadcast_to(b.data.sum(axis=1), (3, 4)))


def test_batched_matmul_grad():
    rng = np.random.default_rng(1)
    a = leaf(rng.standard_normal((2, 3, 4)))
    b = leaf(rng.standard_normal((4, 2)))
    c = Tensor(rng.standard_normal((2, 3, 2)))
    assert ad.grad_check(lambda t: ad.sum(ad.mul(ad.matmul(t, b), c)), a) < 1e-8
    assert ad.grad_check(lambda t: ad.sum(ad.mul(ad.matmul(a, t), c)), b) < 1e-8


def test_softmax_rows_sum_to_one_and_are_stable():
    x = Tensor([[1000.0, 1001.0, 1002.0], [-5.0, 0.0, 5.0]])
    p = ad.softmax(x).data
    assert np.all(p > 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0)
    np.testing.assert_allclose(p[0], np.exp([-2, -1, 0]) / np.exp([-2, -1, 0]).sum())
    np.testing.assert_allclose(np.exp(ad.log_softmax(x).data), p)


def test_layer_norm_normalizes():
    rng = np.random.default_rng(2)
    x = Tensor(rng.standard_normal((4, 6)) * 3 + 2)
    y = ad.layer_norm(x, Tensor(np.ones(6)), Tensor(np.zeros(6))).data
    np.testing.assert_allclose(y.mean(axis=-1), 0, atol=1e-12)
    np.testing.assert_allclose(y.std(axis=-1), 1, atol=1e-5)


def test_shift_time():
    x = Tensor(np.arange(5.0)[None, :, None])
    np.testing.assert_array_equal(ad.shift_time(x, 2).data[0, :, 0], [0, 0, 0, 1, 2])
    np.testing.assert_array_equal(ad.shift_time(x, -1).data[0, :, 0], [1, 2, 3, 4, 0])
    np.testing.assert_array_equal(ad.shift_time(x, 9).data, 0)


@pytest.mark.parametrize("name,fn", [
    ("tanh", ad.tanh),
    ("gelu", ad.gelu),
    ("exp", ad.exp),
    ("square", ad.square),
    ("huber", lambda t: ad.huber(t, 1.0)),
    ("softmax", lambda t: ad.softmax(t, axis=-1)),
    ("log_softmax", lambda t: ad.log_softmax(t, axis=-1)),
    ("shift", lambda t: ad.shift_time(t, 1)),
    ("transpose", lambda t: ad.transpose(t, (1, 0, 2))),
    ("mean", lambda t: ad.mean(t, axis=1, keepdims=True)),
    ("fancy index", lambda t: t[:, [0, 0, 2]]),
    ("concat", lambda t: ad.concat([t, ad.scale(t, 2.0)], axis=-1)),
])
def test_unary_gradients(name, fn):
    rng = np.random.default_rng(3)
    x = leaf(rng.standard_normal((2, 3, 4)) * 1.5)
    w = Tensor(rng.standard_normal(fn(Tensor(x.data)).shape))
    assert ad.grad_check(lambda t: ad.sum(ad.mul(fn(t), w)), x) < 1e-6


def test_layer_norm_and_bias_gradients():
    rng = np.random.default_rng(4)
    x = leaf(rng.standard_normal((3, 5)))
    g, b = leaf(rng.standard_normal(5)), leaf(rng.standard_normal(5))
    w = Tensor(rng.standard_normal((3, 5)))
    f = lambda: ad.sum(ad.mul(ad.layer_norm(x, g, b), w))  # noqa: E731
    for t in (x, g, b):
        assert ad.grad_check(lambda _: f(), t) < 1e-6
    assert ad.grad_check(lambda t: ad.sum(ad.mul(ad.add_bias(x, t), w)), b) < 1e-8


def test_shared_subexpression_accumulates():
    x = leaf([2.0, -3.0])
    y = ad.mul(x, x)
    ad.backward(ad.sum(ad.add(y, y)))
    np.testing.assert_allclose(x.grad, 4 * x.data)


def test_tape_is_topological_and_unique():
    x = leaf([1.0, 2.0])
    h = ad.tanh(x)
    root = ad.sum(ad.add(h, ad.mul(h, h)))
    order = ad.tape(root)
    pos = {id(n): i for i, n in enumerate(order)}
    assert len(pos) == len(order)
    for n in order:
        for p in n._parents:
            if p.requires_grad:
                assert pos[id(p)] < pos[id(n)]


def test_backward_needs_scalar_and_frees_graph():
    x = leaf([1.0, 2.0])
    with pytest.raises(UsageError):
        ad.backward(ad.tanh(x))
    root = ad.sum(ad.tanh(x))
    ad.backward(root)
    assert root._parents == ()


def test_no_grad_records_nothing():
    x = leaf([1.0])
    with ad.no_grad():
        y = ad.tanh(x)
    assert not y.requires_grad and y._backward is None


def test_non_finite_is_an_error():
    with pytest.raises(NonFiniteError):
        ad.exp(Tensor([1000.0]))
    with ad.finite_checks(False):
        assert np.isinf(ad.exp(Tensor([1000.0])).data[0])


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-3, 3)), arrays(np.float64, (4, 2), elements=st.floats(-3, 3)))
def test_matmul_matches_numpy(a, b):
    np.testing.assert_allclose(ad.matmul(Tensor(a), Tensor(b)).data, a @ b)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (5,), elements=st.floats(-4, 4)))
def test_huber_matches_definition(v):
    y = ad.huber(Tensor(v), 1.0).data
    expect = np.where(np.abs(v) < 1, 0.5 * v * v, np.abs(v) - 0.5)
    np.testing.assert_allclose(y, expect)
