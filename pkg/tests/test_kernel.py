"""Tests for the tensor kernel: operations, gradients, optimizer, random streams."""

import numpy as np
import pytest

from crossl.core.errors import ConfigError, EmptyAxisError, EmptyTapeError, InvalidWindowError, LabelError, ShapeError
from crossl.kernel import (
    AdamState,
    Parameter,
    Rng,
    Tensor,
    adam_step,
    add,
    backward,
    conv1d,
    dense,
    flatten,
    global_mean_pool,
    gradient_check,
    mask_multiply,
    relative_error,
    relu,
    scale,
    softmax,
    softmax_cross_entropy,
    stack,
    sum_all,
)

TRIALS = 20
TOLERANCE = 1e-4


def weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar with a non-uniform gradient, so every output entry matters."""
    return sum_all(mask_multiply(out, weights))


def conv_oracle(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, stride: int) -> np.ndarray:
    n, t, _ = x.shape
    width, _, c_out = kernel.shape
    t_out = (t - width) // stride + 1
    out = np.zeros((n, t_out, c_out))
    for i in range(n):
        for step in range(t_out):
            window = x[i, step * stride : step * stride + width]
            for o in range(c_out):
                out[i, step, o] = np.sum(window * kernel[:, :, o]) + bias[o]
    return out


class TestConv1d:
    @pytest.mark.parametrize("stride", [1, 2, 3])
    def test_matches_direct_loop(self, stride):
        rng = np.random.default_rng(stride)
        x, kernel, bias = rng.normal(size=(2, 11, 3)), rng.normal(size=(4, 3, 5)), rng.normal(size=5)
        out = conv1d(Tensor(x), Tensor(kernel), Tensor(bias), stride)
        assert out.shape == (2, (11 - 4) // stride + 1, 5)
        np.testing.assert_allclose(out.value, conv_oracle(x, kernel, bias, stride), rtol=0, atol=1e-12)

    def test_window_equal_to_kernel_gives_one_step(self):
        out = conv1d(Tensor(np.ones((1, 4, 1))), Tensor(np.ones((4, 1, 1))), Tensor(np.zeros(1)))
        assert out.shape == (1, 1, 1)
        assert out.item() == 4.0

    def test_short_window_rejected(self):
        with pytest.raises(InvalidWindowError):
            conv1d(Tensor(np.ones((1, 2, 1))), Tensor(np.ones((3, 1, 1))), Tensor(np.zeros(1)))

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            conv1d(Tensor(np.ones((1, 5, 2))), Tensor(np.ones((3, 1, 1))), Tensor(np.zeros(1)))

    def test_bad_stride_rejected(self):
        with pytest.raises(ConfigError):
            conv1d(Tensor(np.ones((1, 5, 1))), Tensor(np.ones((3, 1, 1))), Tensor(np.zeros(1)), stride=0)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_gradients(self, stride):
        rng = np.random.default_rng(100 + stride)
        for _ in range(TRIALS):
            x, kernel, bias = rng.normal(size=(2, 9, 2)), rng.normal(size=(3, 2, 3)), rng.normal(size=3)
            t_out = (9 - 3) // stride + 1
            weights = rng.normal(size=(2, t_out, 3))
            worst = gradient_check(lambda ts: weighted_sum(conv1d(ts[0], ts[1], ts[2], stride), weights), [x, kernel, bias])
            assert worst <= TOLERANCE


class TestDenseAndActivations:
    def test_dense_value(self):
        x, w, b = np.array([[1.0, 2.0]]), np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]), np.array([0.5, 0.5, 0.5])
        np.testing.assert_array_equal(dense(Tensor(x), Tensor(w), Tensor(b)).value, [[1.5, 2.5, 3.5]])

    def test_dense_shape_mismatch(self):
        with pytest.raises(ShapeError):
            dense(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))), Tensor(np.zeros(3)))

    def test_dense_gradients(self):
        rng = np.random.default_rng(1)
        for _ in range(TRIALS):
            x, w, b = rng.normal(size=(4, 3)), rng.normal(size=(3, 2)), rng.normal(size=2)
            weights = rng.normal(size=(4, 2))
            assert gradient_check(lambda ts: weighted_sum(dense(*ts), weights), [x, w, b]) <= TOLERANCE

    def test_relu_gradients_away_from_kink(self):
        rng = np.random.default_rng(2)
        for _ in range(TRIALS):
            x = rng.normal(size=(3, 4))
            x[np.abs(x) < 1e-3] = 0.5
            weights = rng.normal(size=(3, 4))
            assert gradient_check(lambda ts: weighted_sum(relu(ts[0]), weights), [x]) <= TOLERANCE

    def test_global_mean_pool(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 5, 3))
        np.testing.assert_allclose(global_mean_pool(Tensor(x)).value, x.mean(axis=1))
        for _ in range(TRIALS):
            x = rng.normal(size=(2, 5, 3))
            weights = rng.normal(size=(2, 3))
            assert gradient_check(lambda ts: weighted_sum(global_mean_pool(ts[0]), weights), [x]) <= TOLERANCE

    def test_global_mean_pool_empty_axis(self):
        with pytest.raises(EmptyAxisError):
            global_mean_pool(Tensor(np.zeros((2, 0, 3))))

    def test_softmax_rows_sum_to_one(self):
        probs = softmax(np.random.default_rng(4).normal(size=(6, 5)) * 50)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert (probs >= 0).all()


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss = softmax_cross_entropy(Tensor(np.zeros((3, 4))), [0, 1, 2])
        assert loss.item() == pytest.approx(np.log(4.0), abs=1e-12)

    def test_gradient_is_softmax_minus_onehot(self):
        logits = np.random.default_rng(5).normal(size=(3, 4))
        labels = np.array([1, 0, 3])
        param = Parameter(logits, name="logits")
        backward(softmax_cross_entropy(param, labels))
        expected = softmax(logits)
        expected[np.arange(3), labels] -= 1.0
        np.testing.assert_allclose(param.grad, expected / 3, atol=1e-12)

    def test_gradients(self):
        rng = np.random.default_rng(6)
        for _ in range(TRIALS):
            logits = rng.normal(size=(5, 3))
            labels = rng.integers(0, 3, size=5)
            assert gradient_check(lambda ts: softmax_cross_entropy(ts[0], labels), [logits]) <= TOLERANCE

    def test_label_out_of_range(self):
        with pytest.raises(LabelError):
            softmax_cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])

    def test_label_count_mismatch(self):
        with pytest.raises(ShapeError):
            softmax_cross_entropy(Tensor(np.zeros((2, 3))), [0])


class TestStructuralOps:
    def test_stack_and_flatten_layout(self):
        a, b = Tensor(np.array([[1.0, 2.0]])), Tensor(np.array([[3.0, 4.0]]))
        stacked = stack([a, b])
        assert stacked.shape == (1, 2, 2)
        np.testing.assert_array_equal(flatten(stacked).value, [[1.0, 2.0, 3.0, 4.0]])

    def test_stack_rejects_mismatched_shapes(self):
        with pytest.raises(ShapeError):
            stack([Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4)))])

    def test_structural_gradients(self):
        rng = np.random.default_rng(7)
        for _ in range(TRIALS):
            parts = [rng.normal(size=(3, 4)) for _ in range(3)]
            mask = rng.random((3, 3, 4)) > 0.5
            weights = rng.normal(size=(3, 12))

            def fn(ts):
                return weighted_sum(flatten(mask_multiply(stack(ts), mask)), weights)

            assert gradient_check(fn, parts) <= TOLERANCE

    def test_add_and_scale(self):
        rng = np.random.default_rng(8)
        for _ in range(TRIALS):
            a, b = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
            assert gradient_check(lambda ts: sum_all(scale(add(ts[0], ts[1]), -2.5)), [a, b]) <= TOLERANCE

    def test_add_rejects_broadcasting(self):
        with pytest.raises(ShapeError):
            add(Tensor(np.ones((2, 3))), Tensor(np.ones(3)))


class TestBackward:
    def test_leaf_has_empty_tape(self):
        with pytest.raises(EmptyTapeError):
            backward(Parameter(np.array(1.0), name="p"))

    def test_non_scalar_rejected(self):
        p = Parameter(np.ones((2, 2)), name="p")
        with pytest.raises(ShapeError):
            backward(relu(p))

    def test_shared_node_accumulates(self):
        p = Parameter(np.array([[2.0]]), name="p")
        backward(sum_all(add(p, p)))
        np.testing.assert_array_equal(p.grad, [[2.0]])

    def test_relative_error_floor(self):
        assert relative_error(np.array([1e-6]), np.array([0.0]))[0] == pytest.approx(1e-4)
        assert relative_error(np.array([1e-6]), np.array([0.0]), floor=1e-8)[0] == pytest.approx(1.0)


class TestAdam:
    def test_first_step_moves_by_learning_rate(self):
        p = Parameter(np.array([1.0, -1.0]), name="p")
        p.grad = np.array([0.5, -3.0])
        adam_step([p], AdamState(lr=0.1))
        np.testing.assert_allclose(p.value, [0.9, -0.9], atol=1e-6)
        np.testing.assert_array_equal(p.grad, [0.0, 0.0])

    def test_frozen_parameter_untouched(self):
        frozen = Parameter(np.array([1.0]), name="frozen", trainable=False)
        frozen.grad = np.array([10.0])
        state = AdamState(lr=0.1)
        adam_step([frozen], state)
        assert frozen.value[0] == 1.0
        assert "frozen" not in state.first
        assert frozen.grad[0] == 0.0

    def test_late_unfrozen_parameter_starts_fresh(self):
        late = Parameter(np.array([0.0]), name="late", trainable=False)
        other = Parameter(np.array([0.0]), name="other")
        state = AdamState(lr=0.1)
        for _ in range(200):
            other.grad = np.array([1.0])
            adam_step([late, other], state)
        late.trainable = True
        late.grad = np.array([1.0])
        adam_step([late, other], state)
        np.testing.assert_allclose(late.value, [-0.1], atol=1e-6)
        assert state.t == 201
        assert state.steps == {"late": 1, "other": 201}

    def test_zero_gradient_keeps_value(self):
        p = Parameter(np.array([0.3]), name="p")
        state = AdamState(lr=0.1)
        for _ in range(5):
            adam_step([p], state)
        assert p.value[0] == 0.3


class TestRng:
    def test_same_seed_same_draws(self):
        np.testing.assert_array_equal(Rng(3).uniform(10), Rng(3).uniform(10))

    def test_children_are_independent_and_stable(self):
        root = Rng(3)
        a, b = root.child("a").uniform(10), root.child("b").uniform(10)
        assert not np.array_equal(a, b)
        np.testing.assert_array_equal(a, Rng(3, ("a",)).uniform(10))

    def test_truncated_normal_bounds(self):
        values = Rng(0).truncated_normal((10000,), 0.5)
        assert np.abs(values).max() <= 1.0
