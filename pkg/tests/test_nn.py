import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evomix.errors import InputError, ShapeError, TrainingError
from evomix.nn import (
    AdamState,
    MlpParams,
    adam_step,
    init_adam,
    init_mlp,
    mlp_backward,
    mlp_forward,
    softmax_cross_entropy,
)
from oracles import (
    assert_grads_close,
    finite_diff_param_grads,
    scalar_adam_trajectory,
    scalar_mlp_forward,
)


def single_layer(w, b, act="identity"):
    return MlpParams(layers=[(np.asarray(w, float), np.asarray(b, float))], activations=[act])


class TestMlpForward:
    def test_identity_layer_passes_input_through(self):
        params = single_layer(np.eye(3), np.zeros(3))
        x = np.array([[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]])
        out, _ = mlp_forward(params, x)
        np.testing.assert_array_equal(out, x)

    def test_zero_weights_emit_bias(self):
        b = np.array([0.3, -1.2])
        params = single_layer(np.zeros((4, 2)), b)
        out, _ = mlp_forward(params, np.random.default_rng(0).standard_normal((5, 4)))
        np.testing.assert_array_equal(out, np.tile(b, (5, 1)))

    def test_two_layer_relu_matches_scalar_oracle(self):
        rng = np.random.default_rng(42)
        params = MlpParams(
            layers=[
                (rng.standard_normal((3, 4)), rng.standard_normal(4)),
                (rng.standard_normal((4, 2)), rng.standard_normal(2)),
            ],
            activations=["relu", "identity"],
        )
        x = np.array([[0.1, -0.7, 2.0], [1.5, 0.0, -0.2]])
        out, _ = mlp_forward(params, x)
        expected = scalar_mlp_forward(
            [(w.tolist(), b.tolist()) for w, b in params.layers],
            params.activations,
            x.tolist(),
        )
        np.testing.assert_allclose(out, np.array(expected), rtol=1e-12)

    def test_dim_mismatch_raises(self):
        params = single_layer(np.eye(3), np.zeros(3))
        with pytest.raises(ShapeError):
            mlp_forward(params, np.zeros((2, 4)))

    def test_softplus_matches_scalar_oracle(self):
        params = single_layer(np.eye(2), np.zeros(2), act="softplus")
        x = np.array([[-50.0, 0.0], [3.0, 40.0]])
        out, _ = mlp_forward(params, x)
        expected = scalar_mlp_forward([(np.eye(2).tolist(), [0.0, 0.0])], ["softplus"], x.tolist())
        np.testing.assert_allclose(out, expected, rtol=1e-12)


class TestMlpBackward:
    def test_zero_output_grad_gives_zero_grads(self):
        rng = np.random.default_rng(1)
        params = init_mlp([3, 5, 2], ["relu", "identity"], rng)
        out, tape = mlp_forward(params, rng.standard_normal((4, 3)))
        grads, input_grad = mlp_backward(params, tape, np.zeros_like(out))
        assert not input_grad.any()
        for dw, db in grads:
            assert not dw.any() and not db.any()

    def test_linear_layer_sum_loss_grad_is_xT_ones(self):
        rng = np.random.default_rng(2)
        params = single_layer(rng.standard_normal((3, 2)), np.zeros(2))
        x = rng.standard_normal((5, 3))
        _, tape = mlp_forward(params, x)
        grads, _ = mlp_backward(params, tape, np.ones((5, 2)))
        np.testing.assert_allclose(grads[0][0], x.T @ np.ones((5, 2)), rtol=1e-12)
        np.testing.assert_allclose(grads[0][1], np.full(2, 5.0), rtol=1e-12)

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(3)
        params = init_mlp([4, 6, 5, 3], ["relu", "softplus", "identity"], rng)
        x = rng.standard_normal((3, 4))
        r = rng.standard_normal((3, 3))

        def loss():
            out, _ = mlp_forward(params, x)
            return float((out * r).sum())

        _, tape = mlp_forward(params, x)
        analytic, _ = mlp_backward(params, tape, r)
        numeric = finite_diff_param_grads(params, loss, h=1e-4)
        assert_grads_close(analytic, numeric, rel_tol=1e-5)

    def test_input_grad_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        params = init_mlp([3, 4, 2], ["softplus", "identity"], rng)
        x = rng.standard_normal((2, 3))
        r = rng.standard_normal((2, 2))
        _, tape = mlp_forward(params, x)
        _, input_grad = mlp_backward(params, tape, r)
        h = 1e-4
        for i in range(x.shape[0]):
            for j in range(x.shape[1]):
                orig = x[i, j]
                x[i, j] = orig + h
                hi = float((mlp_forward(params, x)[0] * r).sum())
                x[i, j] = orig - h
                lo = float((mlp_forward(params, x)[0] * r).sum())
                x[i, j] = orig
                num = (hi - lo) / (2 * h)
                assert abs(num - input_grad[i, j]) <= 1e-5 * max(abs(num), abs(input_grad[i, j]), 1e-8)

    def test_stale_tape_raises(self):
        rng = np.random.default_rng(5)
        params = init_mlp([3, 2], ["identity"], rng)
        other = init_mlp([4, 5, 2], ["relu", "identity"], rng)
        _, tape = mlp_forward(other, rng.standard_normal((2, 4)))
        with pytest.raises(ShapeError):
            mlp_backward(params, tape, np.zeros((2, 2)))

    @given(
        dims=st.lists(st.integers(1, 6), min_size=2, max_size=4),
        rows=st.integers(1, 5),
        seed=st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=40, deadline=None)
    def test_grad_shapes_match_param_shapes(self, dims, rows, seed):
        rng = np.random.default_rng(seed)
        acts = ["relu"] * (len(dims) - 2) + ["identity"]
        params = init_mlp(dims, acts, rng)
        x = rng.standard_normal((rows, dims[0]))
        out, tape = mlp_forward(params, x)
        grads, input_grad = mlp_backward(params, tape, np.ones_like(out))
        assert input_grad.shape == x.shape
        for (dw, db), (w, b) in zip(grads, params.layers):
            assert dw.shape == w.shape and db.shape == b.shape

    def test_determinism_bit_identical(self):
        rng = np.random.default_rng(7)
        params = init_mlp([5, 8, 4], ["relu", "identity"], rng)
        x = rng.standard_normal((6, 5))
        r = rng.standard_normal((6, 4))
        out1, tape1 = mlp_forward(params, x)
        out2, tape2 = mlp_forward(params, x)
        assert np.array_equal(out1, out2)
        g1, i1 = mlp_backward(params, tape1, r)
        g2, i2 = mlp_backward(params, tape2, r)
        assert np.array_equal(i1, i2)
        for (a, b), (c, d) in zip(g1, g2):
            assert np.array_equal(a, c) and np.array_equal(b, d)


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_give_log_c(self):
        for c in (2, 5, 10):
            loss, _ = softmax_cross_entropy(np.zeros((3, c)), np.array([0, 1, c - 1]))
            assert loss == pytest.approx(math.log(c), rel=1e-12)

    def test_dominant_true_logit_drives_loss_to_zero(self):
        logits = np.array([[40.0, 0.0, 0.0]])
        loss, _ = softmax_cross_entropy(logits, np.array([0]))
        assert 0.0 <= loss < 1e-15

    def test_fixed_logits_match_scalar_formula(self):
        logits = np.array([[1.0, 2.0, 0.5]])
        loss, _ = softmax_cross_entropy(logits, np.array([1]))
        expected = -(2.0 - math.log(math.exp(1.0) + math.exp(2.0) + math.exp(0.5)))
        assert loss == pytest.approx(expected, rel=1e-12)

    def test_grad_rows_sum_to_zero_and_match_finite_diff(self):
        rng = np.random.default_rng(8)
        logits = rng.standard_normal((4, 3))
        labels = np.array([0, 2, 1, 1])
        loss, grad = softmax_cross_entropy(logits, labels)
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)
        h = 1e-6
        for i in range(4):
            for j in range(3):
                orig = logits[i, j]
                logits[i, j] = orig + h
                hi, _ = softmax_cross_entropy(logits, labels)
                logits[i, j] = orig - h
                lo, _ = softmax_cross_entropy(logits, labels)
                logits[i, j] = orig
                assert (hi - lo) / (2 * h) == pytest.approx(grad[i, j], rel=1e-4, abs=1e-8)

    def test_label_out_of_range_raises(self):
        with pytest.raises(InputError):
            softmax_cross_entropy(np.zeros((2, 3)), np.array([0, 3]))
        with pytest.raises(InputError):
            softmax_cross_entropy(np.zeros((1, 3)), np.array([-1]))

    def test_loss_nonnegative_property(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            logits = rng.standard_normal((5, 4)) * 10
            labels = rng.integers(0, 4, size=5)
            loss, _ = softmax_cross_entropy(logits, labels)
            assert loss >= 0.0


class TestAdam:
    def test_zero_gradient_leaves_params_unchanged(self):
        rng = np.random.default_rng(10)
        params = init_mlp([3, 2], ["identity"], rng)
        state = init_adam(params)
        before = [(w.copy(), b.copy()) for w, b in params.layers]
        adam_step(params, [(np.zeros((3, 2)), np.zeros(2))], state)
        assert state.step == 1
        for (w, b), (w0, b0) in zip(params.layers, before):
            np.testing.assert_array_equal(w, w0)
            np.testing.assert_array_equal(b, b0)

    def test_first_step_moves_by_lr_against_gradient_sign(self):
        rng = np.random.default_rng(11)
        params = init_mlp([2, 2], ["identity"], rng)
        state = init_adam(params, lr=1e-3)
        g = np.array([[0.5, -2.0], [1.0, -0.1]])
        before = params.layers[0][0].copy()
        adam_step(params, [(g, np.zeros(2))], state)
        delta = params.layers[0][0] - before
        np.testing.assert_allclose(np.abs(delta), 1e-3, rtol=1e-4)
        np.testing.assert_array_equal(np.sign(delta), -np.sign(g))

    def test_three_step_quadratic_matches_scalar_oracle(self):
        params = MlpParams(layers=[(np.array([[1.0]]), np.zeros(1))], activations=["identity"])
        state = init_adam(params, lr=1e-3)
        for _ in range(3):
            w = params.layers[0][0][0, 0]
            adam_step(params, [(np.array([[2.0 * w]]), np.zeros(1))], state)
        expected = scalar_adam_trajectory(1.0, lambda w: 2.0 * w, steps=3, lr=1e-3)
        assert params.layers[0][0][0, 0] == pytest.approx(expected, abs=1e-12)

    def test_nonfinite_gradient_raises_training_error(self):
        rng = np.random.default_rng(12)
        params = init_mlp([2, 2], ["identity"], rng)
        state = init_adam(params)
        with pytest.raises(TrainingError):
            adam_step(params, [(np.array([[np.nan, 0.0], [0.0, 0.0]]), np.zeros(2))], state)

    def test_accumulator_shapes_follow_params(self):
        rng = np.random.default_rng(13)
        params = init_mlp([4, 7, 3], ["relu", "identity"], rng)
        state = init_adam(params)
        for (mw, mb), (w, b) in zip(state.m, params.layers):
            assert mw.shape == w.shape and mb.shape == b.shape


class TestInitMlp:
    def test_rejects_bad_specs(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ShapeError):
            init_mlp([3], [], rng)
        with pytest.raises(ShapeError):
            init_mlp([3, 2], ["relu", "relu"], rng)
        with pytest.raises(InputError):
            MlpParams(layers=[(np.eye(2), np.zeros(2))], activations=["tanh"])

    def test_chained_dims_enforced(self):
        with pytest.raises(ShapeError):
            MlpParams(
                layers=[(np.zeros((3, 4)), np.zeros(4)), (np.zeros((5, 2)), np.zeros(2))],
                activations=["relu", "identity"],
            )
