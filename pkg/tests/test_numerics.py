import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fgnmt import numerics as nx
from fgnmt.errors import ContractError, DimensionError, NumericError
from fgnmt.numerics import Tensor


def test_matmul_identity_and_small():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(nx.matmul(Tensor(np.eye(2)), a).data, a.data)
    assert nx.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_shape_error_names_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        nx.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_gradient_matches_finite_differences(rng):
    b = Tensor(rng.normal(size=(3, 3)))
    a = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    assert nx.grad_check(lambda x: nx.tsum(nx.matmul(x, b)), a, eps=1e-6) < 1e-6
    # backward rule: a.grad = g b^T with g = ones
    a.zero_grad()
    nx.backward(nx.tsum(nx.matmul(a, b)))
    np.testing.assert_allclose(a.grad, np.ones((3, 3)) @ b.data.T)


def test_elementwise_examples():
    assert nx.elementwise("tanh", Tensor(0.0)).item() == 0.0
    assert nx.elementwise("sigmoid", Tensor(0.0)).item() == 0.5
    out = nx.elementwise("mul", Tensor([1.0, 2.0, 3.0]), Tensor([4.0, 5.0, 6.0]))
    assert out.data.tolist() == [4.0, 10.0, 18.0]
    with pytest.raises(DimensionError):
        nx.elementwise("add", Tensor([1.0, 2.0, 3.0]), Tensor([1.0, 2.0]))
    with pytest.raises(ContractError):
        nx.elementwise("relu", Tensor(1.0))


def test_sigmoid_is_overflow_free():
    with np.errstate(over="raise"):
        out = nx.sigmoid(Tensor([-1000.0, 1000.0])).data
    assert out.tolist() == [0.0, 1.0]


def test_softmax_examples():
    np.testing.assert_allclose(nx.softmax_over_axis(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, rtol=0, atol=1e-15)
    np.testing.assert_allclose(nx.softmax_over_axis(Tensor([0.0, np.log(2.0)])).data, [1 / 3, 2 / 3], atol=1e-15)
    with np.errstate(over="raise"):
        assert nx.softmax_over_axis(Tensor([1000.0, 1000.0])).data.tolist() == [0.5, 0.5]


def test_softmax_rejects_non_finite_and_bad_axis():
    with pytest.raises(NumericError):
        nx.softmax_over_axis(Tensor([0.0, np.nan]))
    with pytest.raises(ContractError):
        nx.softmax_over_axis(Tensor([0.0, 1.0]), axis=1)


def test_masked_softmax_zeroes_padding():
    out = nx.softmax_over_axis(Tensor([[1.0, 2.0, 50.0]]), axis=-1, mask=np.array([[1, 1, 0]])).data
    assert out[0, 2] == 0.0
    np.testing.assert_allclose(out[0, :2], nx.softmax_over_axis(Tensor([1.0, 2.0])).data, atol=1e-16)


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=st.floats(-30, 30)),
    st.sampled_from([0, 1, -1]),
)
def test_softmax_slices_on_simplex(x, axis):
    y = nx.softmax_over_axis(Tensor(x), axis=axis).data
    assert np.all(y > 0)
    np.testing.assert_allclose(y.sum(axis=axis), 1.0, rtol=0, atol=1e-12)


def test_backward_examples():
    w = Tensor([1.0, 2.0], requires_grad=True)
    nx.backward(nx.tsum(w))
    assert w.grad.tolist() == [1.0, 1.0]
    w.zero_grad()
    nx.backward(nx.tsum(w * w))
    assert w.grad.tolist() == [2.0, 4.0]


def test_backward_twice_doubles_gradient(rng):
    w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    loss = nx.tsum(nx.tanh(nx.matmul(w, Tensor(rng.normal(size=(3, 2))))))
    nx.backward(loss)
    once = w.grad.copy()
    nx.backward(loss)
    np.testing.assert_array_equal(w.grad, 2 * once)


def test_backward_needs_scalar():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        nx.backward(w * 2.0)


def test_graph_is_topologically_ordered(rng):
    a = Tensor(rng.normal(size=3), requires_grad=True)
    b = nx.tanh(a)
    c = b * b + a
    graph = nx.backward(nx.tsum(c))
    pos = {id(n): i for i, n in enumerate(graph)}
    for node in graph:
        for p in node.parents:
            if p.requires_grad:
                assert pos[id(p)] < pos[id(node)]


def test_no_grad_records_nothing():
    w = Tensor([1.0], requires_grad=True)
    with nx.no_grad():
        out = w * 3.0
    assert not out.requires_grad and out.parents == ()


def test_grad_check_linear_and_tanh(rng):
    x = Tensor(rng.normal(size=7), requires_grad=True)
    # linear: central differences are exact up to roundoff, which shrinks with eps
    assert nx.grad_check(nx.tsum, x, eps=1e-3) < 1e-10
    x10 = Tensor(rng.normal(size=10), requires_grad=True)
    assert nx.grad_check(lambda v: nx.tsum(nx.tanh(v)), x10, eps=1e-6) < 1e-6


def test_grad_check_catches_a_corrupted_backward_rule(rng):
    def bad_tanh(x):
        y = np.tanh(x.data)
        # derivative should be 1 - y^2
        return Tensor.from_op(y, (x,), lambda g: (g * (1.0 - y),), "bad_tanh")

    x = Tensor(rng.normal(size=10), requires_grad=True)
    assert nx.grad_check(lambda v: nx.tsum(bad_tanh(v)), x, eps=1e-6) > 1e-2


@pytest.mark.parametrize(
    "fn",
    [
        lambda x: nx.tsum(nx.sigmoid(x) * x),
        lambda x: nx.tsum(nx.log_softmax(x, axis=-1) * Tensor(np.arange(12.0).reshape(3, 4))),
        lambda x: nx.tsum(nx.softmax_over_axis(x, axis=0) * Tensor(np.arange(12.0).reshape(3, 4))),
        lambda x: nx.tsum(nx.concat([x, nx.tanh(x)], axis=0)[1:4]),
        lambda x: nx.tsum(nx.stack([x, x * x], axis=1)[:, 1]),
        lambda x: nx.tsum(nx.transpose(x) @ Tensor(np.ones((3, 2)))),
        lambda x: nx.tsum(nx.tanh(nx.linear(x, Tensor(np.arange(8.0).reshape(2, 4) / 8), Tensor([1.0, -1.0])))),
        lambda x: nx.mean(nx.exp(x * 0.3), axis=1)[2],
        lambda x: nx.tsum(x[np.array([0, 0, 2])] * x[np.array([1, 2, 2])]),
    ],
)
def test_op_gradients(fn, rng):
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    assert nx.grad_check(fn, x, eps=1e-6) < 1e-7


def test_gather_columns_gradient_counts_occurrences():
    table = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    out = nx.gather_columns(table, [2, 0, 2])
    np.testing.assert_array_equal(out.data, [[2.0, 5.0], [0.0, 3.0], [2.0, 5.0]])
    nx.backward(nx.tsum(out))
    np.testing.assert_array_equal(table.grad, [[1.0, 0.0, 2.0], [1.0, 0.0, 2.0]])


def test_operations_are_deterministic(rng):
    a = rng.normal(size=(5, 5))
    outs = []
    for _ in range(2):
        x = Tensor(a.copy(), requires_grad=True)
        loss = nx.tsum(nx.softmax_over_axis(nx.tanh(x @ Tensor(a)), axis=0) * x)
        nx.backward(loss)
        outs.append((loss.data.tobytes(), x.grad.tobytes()))
    assert outs[0] == outs[1]
