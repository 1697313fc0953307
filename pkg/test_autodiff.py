import numpy as np
import pytest

from dpn.autodiff import Tensor, backward, get_tape, grad_check, no_grad
from dpn.autodiff import ops
from dpn.errors import ContractError, DimensionError, InvalidMaskError


def leaf(shape, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def test_matmul_gradients_match_finite_differences():
    a, b = leaf((2, 3, 4), 0), leaf((4, 5), 1)
    report = grad_check(lambda x, y: ops.matmul(x, y), [a, b])
    assert report.passed, report.worst()


def test_broadcast_add_sums_bias_gradient():
    x = leaf((2, 3, 4), 0)
    bias = leaf((4,), 1)
    backward(ops.sum_all(ops.add(x, bias)))
    np.testing.assert_allclose(bias.grad, np.full(4, 6.0))
    np.testing.assert_allclose(x.grad, np.ones((2, 3, 4)))


def test_elementwise_and_activation_gradients():
    a, b = leaf((3, 4), 2), leaf((3, 4), 3)

    def f(x, y):
        return ops.mul(ops.sigmoid(ops.sub(x, y)), ops.relu(ops.add(x, y)))

    assert grad_check(f, [a, b]).passed


def test_sigmoid_is_finite_for_large_inputs():
    out = ops.sigmoid(Tensor(np.array([-1000.0, 0.0, 1000.0])))
    np.testing.assert_allclose(out.data, [0.0, 0.5, 1.0])
    assert np.all(np.isfinite(out.data))


def test_masked_softmax_rows_and_zeros():
    scores = leaf((2, 3, 4), 4)
    mask = np.array([True, True, False, True])
    out = ops.softmax_last_dim(scores, mask)
    np.testing.assert_allclose(out.data.sum(axis=-1), 1.0)
    assert np.all(out.data[..., 2] == 0.0)


def test_fully_masked_row_is_rejected():
    scores = leaf((2, 3), 5)
    mask = np.array([[True, False, False], [False, False, False]])
    with pytest.raises(InvalidMaskError):
        ops.softmax_last_dim(scores, mask)


def test_softmax_and_log_softmax_gradients():
    x = leaf((2, 5), 6)
    mask = np.array([[True, True, False, True, True], [True, False, False, False, True]])
    assert grad_check(lambda t: ops.softmax_last_dim(t, mask), [x]).passed
    assert grad_check(lambda t: ops.log_softmax_last_dim(t), [x]).passed


def test_conv1d_same_and_causal_gradients():
    x, w, b = leaf((2, 6, 3), 7), leaf((3 * 3, 4), 8), leaf((4,), 9)
    for mode in ("same", "causal", "valid"):
        report = grad_check(lambda xx, ww, bb: ops.conv1d(xx, ww, bb, mode), [x, w, b])
        assert report.passed, (mode, report.worst())


def test_conv1d_output_lengths():
    x = Tensor(np.zeros((1, 7, 2)))
    w, b = Tensor(np.zeros((6, 4))), Tensor(np.zeros(4))
    assert ops.conv1d(x, w, b, "same").shape == (1, 7, 4)
    assert ops.conv1d(x, w, b, "causal").shape == (1, 7, 4)
    assert ops.conv1d(x, w, b, "valid").shape == (1, 5, 4)


def test_causal_conv_ignores_future_positions():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((1, 8, 3))
    w, b = Tensor(rng.standard_normal((9, 2))), Tensor(rng.standard_normal(2))
    base = ops.conv1d(Tensor(x), w, b, "causal").data
    changed = x.copy()
    changed[:, 5:] += 100.0
    out = ops.conv1d(Tensor(changed), w, b, "causal").data
    np.testing.assert_array_equal(out[:, :5], base[:, :5])


def test_conv1d_window_order_matches_manual_sum():
    x = np.arange(1, 6, dtype=np.float64).reshape(1, 5, 1)
    w = np.array([[1.0], [10.0], [100.0]])
    out = ops.conv1d(Tensor(x), Tensor(w), Tensor(np.zeros(1)), "causal").data[0, :, 0]
    # window at t is (x[t-2], x[t-1], x[t]) with zero padding on the left
    np.testing.assert_allclose(out, [100.0, 210.0, 321.0, 432.0, 543.0])


def test_conv1d_rejects_bad_filter():
    with pytest.raises(DimensionError):
        ops.conv1d(Tensor(np.zeros((1, 4, 3))), Tensor(np.zeros((7, 2))), Tensor(np.zeros(2)))


def test_gather_rows_accumulates_repeated_ids():
    table = leaf((5, 2), 11)
    out = ops.gather_rows(table, np.array([[1, 1, 3]]))
    backward(ops.sum_all(out))
    expected = np.zeros((5, 2))
    expected[1] = 2.0
    expected[3] = 1.0
    np.testing.assert_array_equal(table.grad, expected)


def test_shape_primitives_gradients():
    x = leaf((2, 3, 4), 12)
    y = leaf((2, 3, 2), 13)

    def f(a, b):
        joined = ops.concat_last_dim(a, b)
        swapped = ops.swap_axes(ops.reshape(joined, (2, 3, 2, 3)), 1, 2)
        return ops.scale(ops.slice_last_dim(swapped, 1, 3), 0.5)

    assert grad_check(f, [x, y]).passed


def test_standardize_and_pick_gradients():
    x = leaf((2, 3, 5), 14)
    ids = np.array([[0, 4, 2], [1, 1, 3]])
    assert grad_check(lambda t: ops.standardize_last_dim(t, 1e-5), [x]).passed
    assert grad_check(lambda t: ops.pick_last_dim(t, ids), [x]).passed


def test_backward_requires_scalar():
    x = leaf((2, 2), 15)
    with pytest.raises(ContractError):
        backward(ops.scale(x, 2.0))


def test_backward_resets_tape_and_accumulates_into_leaves():
    x = leaf((3,), 16)
    backward(ops.sum_all(ops.scale(x, 2.0)))
    assert len(get_tape()) == 0
    backward(ops.sum_all(ops.scale(x, 3.0)))
    np.testing.assert_allclose(x.grad, np.full(3, 5.0))


def test_no_grad_records_nothing():
    x = leaf((3,), 17)
    with no_grad():
        y = ops.sum_all(ops.mul(x, x))
    assert not y.requires_grad
    assert len(get_tape()) == 0
    with pytest.raises(ContractError):
        backward(y)


def test_operator_sugar_uses_primitives():
    x = leaf((2,), 18)
    y = (x * 2.0 + 1.0) - x
    backward(ops.sum_all(y))
    np.testing.assert_allclose(x.grad, np.ones(2))


def test_grad_check_flags_a_wrong_backward_rule():
    def bad_square(t):
        return Tensor.from_op(t.data**2, (t,), lambda grad: (grad * t.data,), "bad_square")

    report = grad_check(bad_square, [leaf((4,), 19)])
    assert not report.passed
    assert report.max_error > 0.1


def test_grad_check_samples_entries():
    x = leaf((10, 10), 20)
    report = grad_check(lambda t: ops.mul(t, t), [x], max_entries=7)
    assert report.checked_entries == [7]
    assert report.passed


def test_grad_check_counts_coordinates_hidden_by_the_floor():
    def tiny_doubled(t):
        value = np.asarray(1e-10 * t.data.sum())
        return Tensor.from_op(value, (t,), lambda grad: (grad * np.full(t.shape, 2e-10),), "tiny_doubled")

    x = leaf((5,), 21)
    floored = grad_check(tiny_doubled, [x], tol=1e-3, eps=1e-6)
    assert floored.passed
    assert floored.floored_entries == [5]
    assert floored.hidden_by_floor == 5
    assert floored.floor == 1e-6

    strict = grad_check(tiny_doubled, [x], tol=1e-3)
    assert not strict.passed
    assert strict.hidden_by_floor == 0


def test_grad_check_reports_nothing_hidden_for_exact_rules():
    report = grad_check(lambda t: ops.mul(t, t), [leaf((3, 3), 22)], eps=1e-6)
    assert report.passed
    assert report.hidden_by_floor == 0
