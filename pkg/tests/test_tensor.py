import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genqa import tensor as T
from genqa.gradcheck import check_gradients, max_relative_error, numeric_gradient


def scalar_loss(fn):
    """Run fn() -> Tensor under a fresh tape and return (value, Gradients)."""
    with T.Tape() as tape:
        out = fn()
    return out, tape


def test_matmul_identity():
    a = T.Tensor(np.arange(9, dtype=float).reshape(3, 3))
    eye = T.Tensor(np.eye(3))
    np.testing.assert_array_equal(T.matmul(eye, a).data, a.data)


def test_matmul_hand_case():
    a = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = T.Tensor([[1.0], [1.0]])
    np.testing.assert_array_equal(T.matmul(a, b).data, [[3.0], [7.0]])


def test_matmul_matches_triple_loop_oracle():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 5))
    b = rng.normal(size=(5, 2))
    expected = np.zeros((4, 2))
    for i in range(4):
        for j in range(2):
            for k in range(5):
                expected[i, j] += a[i, k] * b[k, j]
    got = T.matmul(T.Tensor(a), T.Tensor(b)).data
    assert np.abs(got - expected).max() < 1e-12


def test_matmul_shape_mismatch_reports_both_shapes():
    a = T.Tensor(np.zeros((2, 3)))
    b = T.Tensor(np.zeros((2, 3)))
    with pytest.raises(T.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(a, b)


def test_softmax_uniform():
    y = T.softmax(T.Tensor([0.0, 0.0, 0.0])).data
    np.testing.assert_allclose(y, np.full(3, 1 / 3), atol=1e-15)


def test_softmax_extreme_inputs_do_not_overflow():
    y = T.softmax(T.Tensor([1000.0, 0.0])).data
    assert y[0] == pytest.approx(1.0)
    assert y[1] == pytest.approx(0.0, abs=1e-300)
    assert np.isfinite(y).all()


def test_softmax_matches_extended_precision_oracle():
    rng = np.random.default_rng(7)
    x = rng.normal(scale=3.0, size=7)
    xl = x.astype(np.longdouble)
    expected = (np.exp(xl) / np.exp(xl).sum()).astype(np.float64)
    got = T.softmax(T.Tensor(x)).data
    assert np.abs(got - expected).max() < 1e-14


def test_softmax_sums_to_one_and_rejects_empty():
    rng = np.random.default_rng(3)
    for _ in range(50):
        y = T.softmax(T.Tensor(rng.normal(scale=5, size=rng.integers(1, 20)))).data
        assert abs(y.sum() - 1.0) <= 1e-12
        assert (y > 0).all()
    with pytest.raises(T.ShapeError):
        T.softmax(T.Tensor(np.zeros(0)))


@given(st.lists(st.floats(-30, 30), min_size=2, max_size=12), st.randoms())
def test_softmax_permutation_equivariant(xs, rnd):
    perm = list(range(len(xs)))
    rnd.shuffle(perm)
    base = T.softmax(T.Tensor(xs)).data
    permuted = T.softmax(T.Tensor([xs[i] for i in perm])).data
    np.testing.assert_allclose(permuted, base[perm], rtol=1e-12)


def test_elementwise_values():
    assert T.elementwise("sigmoid", T.Tensor(0.0)).item() == pytest.approx(0.5)
    assert T.elementwise("tanh", T.Tensor(0.0)).item() == 0.0
    assert T.elementwise("relu", T.Tensor(-2.0)).item() == 0.0
    with pytest.raises(ValueError):
        T.elementwise("gelu", T.Tensor(0.0))


def test_sigmoid_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    x = T.Tensor(rng.normal(size=6))

    def loss():
        return T.sum_all(T.sigmoid(x)).item()

    with T.Tape() as tape:
        out = T.sum_all(T.sigmoid(x))
    analytic = T.backward(tape, out)[x]
    numeric = numeric_gradient(loss, x)
    assert max_relative_error(analytic, numeric) < 1e-6


def test_concat_identity_and_lengths():
    a = T.Tensor([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(T.concat([a]).data, a.data)
    b = T.Tensor([4.0, 5.0, 6.0, 7.0])
    assert T.concat([a, b]).shape == (7,)
    with pytest.raises(T.ShapeError):
        T.concat([T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((2, 4)))], axis=0)


def test_concat_backward_splits_gradient_exactly():
    a = T.Tensor([1.0, 2.0, 3.0])
    b = T.Tensor([4.0, 5.0])
    with T.Tape() as tape:
        out = T.sum_all(T.concat([a, b]))
    grads = T.backward(tape, out)
    np.testing.assert_array_equal(grads[a], np.ones(3))
    np.testing.assert_array_equal(grads[b], np.ones(2))


def test_backward_sum_gives_ones():
    x = T.Tensor(np.arange(5, dtype=float))
    with T.Tape() as tape:
        loss = T.sum_all(x)
    np.testing.assert_array_equal(T.backward(tape, loss)[x], np.ones(5))


def test_backward_quadratic_form_closed_form():
    rng = np.random.default_rng(5)
    x = T.Tensor(rng.normal(size=4))
    m = T.Tensor(rng.normal(size=(4, 4)))
    with T.Tape() as tape:
        loss = T.dot(x, T.matvec(m, x))
    grads = T.backward(tape, loss)
    expected = (m.data + m.data.T) @ x.data
    np.testing.assert_allclose(grads[x], expected, rtol=1e-12)


def test_backward_rejects_non_scalar_loss():
    x = T.Tensor([1.0, 2.0])
    with T.Tape() as tape:
        y = T.scale(x, 2.0)
    with pytest.raises(T.ShapeError):
        T.backward(tape, y)


def test_unused_leaves_have_exactly_zero_gradient():
    x = T.Tensor([1.0, 2.0])
    unused = T.Tensor([3.0, 4.0])
    with T.Tape() as tape:
        loss = T.sum_all(x)
        T.sum_all(unused)  # dead branch: on the tape but not feeding the loss
    grads = T.backward(tape, loss)
    assert unused not in grads
    np.testing.assert_array_equal(grads[unused], np.zeros(2))


def test_tape_freed_after_backward():
    x = T.Tensor([1.0])
    with T.Tape() as tape:
        loss = T.sum_all(x)
    T.backward(tape, loss)
    assert len(tape) == 0


def test_bias_broadcast_add_and_its_gradient():
    rng = np.random.default_rng(2)
    a = T.Tensor(rng.normal(size=(3, 4)))
    b = T.Tensor(rng.normal(size=4))
    with T.Tape() as tape:
        loss = T.sum_sq(T.add(a, b))
    grads = T.backward(tape, loss)

    def loss_fn():
        return T.sum_sq(T.add(a, b)).item()

    assert max_relative_error(grads[b], numeric_gradient(loss_fn, b)) < 1e-6
    with pytest.raises(T.ShapeError):
        T.add(a, T.Tensor(np.zeros(3)))


def test_non_finite_forward_is_an_error():
    with pytest.raises(T.NonFiniteError):
        T.log(T.Tensor([0.0, 1.0]))
    with pytest.raises(T.NonFiniteError):
        T.Tensor([np.nan])


def test_take_rows_and_scatter_gradient():
    emb = T.Tensor(np.arange(12, dtype=float).reshape(4, 3))
    with T.Tape() as tape:
        rows = T.take_rows(emb, [1, 1, 3])
        loss = T.sum_all(rows)
    grads = T.backward(tape, loss)
    np.testing.assert_array_equal(
        grads[emb], np.array([[0, 0, 0], [2, 2, 2], [0, 0, 0], [1, 1, 1]], dtype=float)
    )


def test_windows_and_max_cols_match_bruteforce():
    rng = np.random.default_rng(9)
    a = rng.normal(size=(6, 3))
    w = T.windows(T.Tensor(a), 2)
    assert w.shape == (5, 6)
    for i in range(5):
        np.testing.assert_array_equal(w.data[i], a[i : i + 2].reshape(-1))
    m = T.max_cols(T.Tensor(a))
    np.testing.assert_array_equal(m.data, a.max(axis=0))


_OP_CASES = {
    "matmul": lambda p: T.matmul(p["a"], p["b"]),
    "matvec": lambda p: T.matvec(p["a"], p["x"]),
    "vecmat": lambda p: T.vecmat(p["x"], p["b"]),
    "dot": lambda p: T.dot(p["x"], p["y"]),
    "mul": lambda p: T.mul(p["x"], p["y"]),
    "sub": lambda p: T.sub(p["x"], p["y"]),
    "tanh": lambda p: T.tanh(p["a"]),
    "sigmoid": lambda p: T.sigmoid(p["a"]),
    "exp": lambda p: T.exp(p["x"]),
    "log": lambda p: T.log(T.add_const(T.sigmoid(p["x"]), 0.5)),
    "softmax": lambda p: T.softmax(p["x"]),
    "softmax_rows": lambda p: T.softmax_rows(p["a"]),
    "stack": lambda p: T.stack([T.get(p["x"], 0), T.get(p["x"], 2)]),
    "reshape": lambda p: T.reshape(p["a"], (p["a"].size,)),
    "row": lambda p: T.row(p["a"], 1),
    "slice_rows": lambda p: T.slice_rows(p["a"], 0, 2),
    "take": lambda p: T.take(p["x"], [0, 2, 2]),
    "get2": lambda p: T.get2(p["a"], 1, 1),
    "windows": lambda p: T.windows(p["a"], 2),
    "max_cols": lambda p: T.max_cols(p["a"]),
    "mean_rows": lambda p: T.mean_rows(p["a"]),
    "mean_all": lambda p: T.mean_all(p["a"]),
    "sum_sq": lambda p: T.sum_sq(p["a"]),
    "concat2d": lambda p: T.concat([p["a"], p["a"]], axis=1),
}


@pytest.mark.parametrize("name", sorted(_OP_CASES))
def test_per_op_gradients_match_finite_differences(name):
    rng = np.random.default_rng(hash(name) % 2**32)
    params = {
        "a": T.Tensor(rng.normal(size=(3, 4))),
        "b": T.Tensor(rng.normal(size=(4, 2))),
        "x": T.Tensor(rng.normal(size=4)),
        "y": T.Tensor(rng.normal(size=4)),
    }
    build = _OP_CASES[name]

    def forward():
        out = build(params)
        # Squash to a scalar through a curvy function so constant Jacobian
        # rows cannot hide sign errors.
        return T.sum_all(T.tanh(T.scale(out, 0.7)))

    with T.Tape() as tape:
        loss = forward()
    grads = T.backward(tape, loss)
    analytic = {k: grads[t] for k, t in params.items()}
    check_gradients(lambda: forward().item(), analytic, params)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(2, 5))
def test_composed_graph_gradients(seed, rows, cols):
    """Random small graphs composed from the primitives pass the FD check."""
    rng = np.random.default_rng(seed)
    params = {
        "w": T.Tensor(rng.normal(size=(cols, rows))),
        "m": T.Tensor(rng.normal(size=(rows, cols))),
        "b": T.Tensor(rng.normal(size=rows)),
        "v": T.Tensor(rng.normal(size=rows)),
    }

    def forward():
        h = T.tanh(T.add(T.matmul(params["m"], params["w"]), params["b"]))
        pooled = T.mean_rows(h)
        attn = T.softmax(T.matvec(h, params["v"]))
        mix = T.vecmat(attn, h)
        score = T.dot(pooled, mix)
        return T.log(T.add_const(T.sigmoid(score), 0.1))

    with T.Tape() as tape:
        loss = forward()
    grads = T.backward(tape, loss)
    analytic = {k: grads[t] for k, t in params.items()}
    check_gradients(lambda: forward().item(), analytic, params)


def test_deterministic_forward():
    rng = np.random.default_rng(11)
    a = rng.normal(size=(5, 5))
    one = T.softmax_rows(T.matmul(T.Tensor(a), T.Tensor(a))).data
    two = T.softmax_rows(T.matmul(T.Tensor(a), T.Tensor(a))).data
    assert (one == two).all()


def test_operator_sugar():
    a = T.Tensor([1.0, 2.0])
    b = T.Tensor([3.0, 4.0])
    np.testing.assert_array_equal((a + b).data, [4.0, 6.0])
    np.testing.assert_array_equal((a - b).data, [-2.0, -2.0])
    np.testing.assert_array_equal((a * b).data, [3.0, 8.0])
    np.testing.assert_array_equal((a * 2.0).data, [2.0, 4.0])
    np.testing.assert_array_equal((-a).data, [-1.0, -2.0])
    np.testing.assert_array_equal((a + 1.0).data, [2.0, 3.0])
