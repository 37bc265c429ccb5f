import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from condfield import autodiff as ad
from condfield.autodiff import (MissingGradientError, NonFiniteError, ParamStore, ShapeError,
                                Tensor, adam_step, check_gradients, no_grad, ops)

from conftest import leaf


def grad_of(loss, *params):
    for p in params:
        p.grad = None
    ad.backward(ad.Graph.trace(loss), loss, params)
    return [p.grad for p in params]


# ---------------------------------------------------------------- forward fixtures

def test_matmul_identity():
    out = ops.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0, 0.0], [0.0, 1.0]]))
    np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])


def test_relu_fixture():
    np.testing.assert_array_equal(ops.relu(Tensor([-1.0, 0.0, 2.0])).data, [0, 0, 2])


def test_softmax_uniform():
    np.testing.assert_allclose(ops.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=1e-15)


def test_forward_op_registry_dispatch():
    out = ad.forward_op("add", Tensor([1.0, 2.0]), Tensor([3.0, 4.0]))
    np.testing.assert_array_equal(out.data, [4, 6])
    with pytest.raises(ValueError, match="unknown op"):
        ad.forward_op("no-such-op", Tensor([1.0]))


def test_shape_error_names_op_and_shapes():
    with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError, match="add"):
        ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))


def test_non_finite_forward_rejected():
    with np.errstate(divide="ignore"), pytest.raises(NonFiniteError):
        ops.log(Tensor([0.0], requires_grad=True))


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=6),
                  elements=st.floats(-50, 50)))
def test_softmax_rows_sum_to_one(x):
    s = ops.softmax(Tensor(x), axis=-1).data
    np.testing.assert_allclose(s.sum(-1), 1.0, atol=1e-6)
    assert np.all(s >= 0)


# ---------------------------------------------------------------- backward

def test_backward_square():
    w = Tensor([3.0], requires_grad=True)
    (g,) = grad_of(ops.sum(ops.mul(w, w)), w)
    np.testing.assert_array_equal(g, [6.0])


def test_unreachable_param_gets_zero_grad():
    w = Tensor([1.5], requires_grad=True)
    x = Tensor([2.0], requires_grad=True)
    gx, gw = grad_of(ops.sum(ops.mul(x, x)), x, w)
    np.testing.assert_array_equal(gw, [0.0])


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        ad.backward(ad.Graph.trace(x * 2.0), x * 2.0)


def test_graph_visits_shared_node_once():
    x = Tensor([2.0], requires_grad=True)
    y = ops.mul(x, x)
    z = ops.add(y, y)                       # y used twice
    graph = ad.Graph.trace(ops.sum(z))
    ids = [id(n) for n in graph.nodes]
    assert len(ids) == len(set(ids))
    (g,) = grad_of(ops.sum(z), x)
    np.testing.assert_allclose(g, [8.0])


def test_no_grad_records_nothing():
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = ops.mul(x, x)
    assert y._parents == () and y._backward is None


# one entry per differentiable op: (name, builder(rng) -> (fn, inputs))
def _cases():
    def unary(op, lo=None):
        def build(rng):
            x = leaf(rng, 3, 4)
            if lo is not None:
                x.data = np.abs(x.data) + lo
            return (lambda: ops.sum(op(x))), [x]
        return build

    def binary(op, positive_b=False):
        def build(rng):
            a, b = leaf(rng, 3, 4), leaf(rng, 4)
            if positive_b:
                b.data = np.abs(b.data) + 0.5
            return (lambda: ops.sum(ops.mul(op(a, b), op(a, b)))), [a, b]
        return build

    def matmul(rng):
        a, b = leaf(rng, 2, 3, 4), leaf(rng, 4, 5)
        return (lambda: ops.sum(ops.sin(ops.matmul(a, b)))), [a, b]

    def softmax(rng):
        x, w = leaf(rng, 3, 5), Tensor(np.arange(15.0).reshape(3, 5))
        return (lambda: ops.sum(ops.mul(ops.softmax(x, axis=-1), w))), [x]

    def layer_norm(rng):
        x, g, b = leaf(rng, 4, 6), leaf(rng, 6), leaf(rng, 6)
        w = Tensor(rng.standard_normal((4, 6)))
        return (lambda: ops.sum(ops.mul(ops.layer_norm(x, g, b), w))), [x, g, b]

    def concat(rng):
        a, b = leaf(rng, 2, 3), leaf(rng, 2, 2)
        w = Tensor(rng.standard_normal((2, 5)))
        return (lambda: ops.sum(ops.mul(ops.concat([a, b], axis=1), w))), [a, b]

    def reshape_transpose(rng):
        x = leaf(rng, 2, 6)
        w = Tensor(rng.standard_normal((3, 2, 2)))
        return (lambda: ops.sum(ops.mul(ops.transpose(ops.reshape(x, (2, 2, 3)), (2, 0, 1)), w))), [x]

    def reductions(rng):
        x = leaf(rng, 3, 4)
        return (lambda: ops.add(ops.sum(ops.square(ops.mean(x, axis=0))), ops.mean(ops.exp(x)))), [x]

    def broadcast(rng):
        x = leaf(rng, 1, 4)
        w = Tensor(rng.standard_normal((3, 4)))
        return (lambda: ops.sum(ops.mul(ops.broadcast_to(x, (3, 4)), w))), [x]

    def getitem(rng):
        x = leaf(rng, 4, 5)
        return (lambda: ops.sum(ops.square(ops.getitem(x, (slice(1, 3), [0, 2, 2]))))), [x]

    def take_rows(rng):
        x = leaf(rng, 5, 3)
        return (lambda: ops.sum(ops.square(ops.take_rows(x, np.array([4, 0, 4]))))), [x]

    def take_along(rng):
        x = leaf(rng, 3, 4)
        idx = np.array([[3, 0, 0], [1, 1, 2], [0, 3, 2]])
        w = Tensor(rng.standard_normal((3, 3)))
        return (lambda: ops.sum(ops.mul(ops.take_along_axis(x, idx, axis=1), w))), [x]

    def conv(rng):
        x, w, b = leaf(rng, 2, 5, 5, 2), leaf(rng, 3, 3, 2, 3, scale=0.5), leaf(rng, 3)
        return (lambda: ops.sum(ops.square(ops.conv2d(x, w, b, stride=2, padding=1)))), [x, w, b]

    def scale(rng):
        x = leaf(rng, 3)
        return (lambda: ops.sum(ops.square(ops.scale(x, -2.5)))), [x]

    return {
        "add": binary(ops.add), "sub": binary(ops.sub), "mul": binary(ops.mul),
        "div": binary(ops.div, positive_b=True), "neg": unary(ops.neg),
        "relu": unary(ops.relu), "sin": unary(ops.sin), "cos": unary(ops.cos),
        "exp": unary(ops.exp), "log": unary(ops.log, lo=0.2), "sigmoid": unary(ops.sigmoid),
        "softplus": unary(ops.softplus), "tanh": unary(ops.tanh), "square": unary(ops.square),
        "matmul": matmul, "softmax": softmax, "layer_norm": layer_norm, "concat": concat,
        "reshape_transpose": reshape_transpose, "sum_mean": reductions, "broadcast_to": broadcast,
        "getitem": getitem, "take_rows": take_rows, "take_along_axis": take_along,
        "conv2d": conv, "scale": scale,
    }


CASES = _cases()


@pytest.mark.parametrize("name", sorted(CASES))
def test_op_gradients_match_finite_differences(name, rng):
    fn, inputs = CASES[name](rng)
    if name == "relu":  # keep samples away from the kink
        inputs[0].data = np.where(np.abs(inputs[0].data) < 1e-2, 0.5, inputs[0].data)
    assert check_gradients(fn, inputs, eps=1e-5) < 1e-4


def test_take_rows_records_rows_on_backward_only():
    x = Tensor(np.zeros((5, 2)), requires_grad=True)
    ops.take_rows(x, [0, 4])  # never differentiated
    loss = ops.sum(ops.take_rows(x, [3, 1, 3]))
    assert x.touched_rows is None
    ad.backward(ad.Graph.trace(loss), loss, [x])
    assert x.touched_rows == {1, 3}
    with pytest.raises(IndexError):
        ops.take_rows(x, [5])


# ---------------------------------------------------------------- params and Adam

def test_adam_zero_gradient_leaves_params():
    store = ParamStore(np.float64)
    p = store.add("w", [1.0, -2.0])
    p.grad = np.zeros(2)
    adam_step(store, lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_is_lr_times_sign():
    store = ParamStore(np.float64)
    p = store.add("w", [0.0])
    p.grad = np.array([1.0])
    adam_step(store, lr=1e-3)
    np.testing.assert_allclose(p.data, [-1e-3], rtol=1e-6)
    assert p.grad is None and store.t == 1


def test_adam_quadratic_trajectory_matches_recurrence():
    store = ParamStore(np.float64)
    w = store.add("w", [0.0])
    losses = []
    for _ in range(10):
        loss = ops.sum(ops.square(ops.sub(w, Tensor([2.0]))))
        losses.append(float(loss.data))
        ad.backward(ad.Graph.trace(loss), loss)
        adam_step(store, lr=0.5)
    # plain-float recurrence of bias-corrected Adam
    wo, m, v, expected = 0.0, 0.0, 0.0, []
    for t in range(1, 11):
        expected.append((wo - 2) ** 2)
        g = 2 * (wo - 2)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        wo -= 0.5 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(losses, expected, rtol=1e-12)
    # descends monotonically until it first overshoots the minimum
    assert all(b < a for a, b in zip(losses[:5], losses[1:5]))
    assert losses[-1] < losses[0]


def _adam_oracle(g_seq, lr, b1=0.9, b2=0.999, eps=1e-8, w0=0.0):
    w, m, v = w0, 0.0, 0.0
    for t, g in enumerate(g_seq, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return w


def test_adam_matches_scalar_recurrence():
    store = ParamStore(np.float64)
    w = store.add("w", [0.3])
    grads = [0.5, -1.0, 2.0, 0.1]
    for g in grads:
        w.grad = np.array([g])
        adam_step(store, lr=0.01)
    assert w.data[0] == pytest.approx(_adam_oracle(grads, 0.01, w0=0.3), abs=1e-12)


def test_adam_missing_gradient_is_error():
    store = ParamStore()
    store.add("a", [1.0])
    store.add("b", [1.0]).grad = np.zeros(1)
    with pytest.raises(MissingGradientError, match="a"):
        adam_step(store)


def test_sparse_param_updates_only_touched_rows():
    store = ParamStore(np.float64)
    table = store.add("table", np.ones((4, 2)), sparse=True)
    loss = ops.sum(ops.square(ops.take_rows(table, [2])))
    ad.backward(ad.Graph.trace(loss), loss, store)
    before = table.data.copy()
    adam_step(store, lr=0.1)
    np.testing.assert_array_equal(table.data[[0, 1, 3]], before[[0, 1, 3]])
    assert np.all(table.data[2] < before[2])
    np.testing.assert_array_equal(store.m["table"][[0, 1, 3]], 0.0)


def test_training_is_bit_deterministic():
    def run():
        rng = np.random.default_rng(7)
        store = ParamStore(np.float32)
        w = store.add("w", rng.standard_normal((4, 3)))
        x = Tensor(rng.standard_normal((8, 4)).astype(np.float32))
        for _ in range(5):
            loss = ops.mean(ops.square(ops.relu(ops.matmul(x, w))))
            ad.backward(ad.Graph.trace(loss), loss)
            adam_step(store, 1e-2)
        return store.checksum()
    assert run() == run()
