import math

import numpy as np
import pytest

from skilllab.diffcore import (
    ParameterSet, Tensor, adam_step, bce, clip_grad_norm, concat, cross_entropy, gather, glorot,
    grad_check, grad_check_errors, layer_norm, matmul, mse, multihead_attention, no_grad, relu, reset_tape,
    sinusoidal_features, softmax,
)
from skilllab.errors import FrozenError, ShapeError, TapeError


class TestForward:
    def test_matmul_identity(self):
        a = np.arange(6, dtype=np.float32).reshape(2, 3)
        out = matmul(Tensor(a), Tensor(np.eye(3)))
        np.testing.assert_allclose(out.data, a)

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_softmax_of_zeros_is_uniform(self):
        out = softmax(Tensor(np.zeros((2, 4))))
        np.testing.assert_allclose(out.data, np.full((2, 4), 0.25))

    def test_softmax_is_shift_invariant(self):
        x = np.array([[1.0, 2.0, 3.0]])
        np.testing.assert_allclose(softmax(Tensor(x)).data, softmax(Tensor(x + 1000.0)).data, rtol=1e-5)

    def test_bce_at_one_half(self):
        out = bce(Tensor(np.full(4, 0.5)), np.array([0.0, 1.0, 0.0, 1.0]))
        assert out.item() == pytest.approx(math.log(2.0), rel=1e-6)

    def test_mse_row_reduction(self):
        out = mse(Tensor(np.array([[1.0, 3.0], [0.0, 0.0]])), np.zeros((2, 2)), reduction='row')
        np.testing.assert_allclose(out.data, [5.0, 0.0])

    def test_cross_entropy_uniform(self):
        out = cross_entropy(Tensor(np.zeros((3, 5))), [0, 2, 4])
        assert out.item() == pytest.approx(math.log(5.0), rel=1e-6)

    def test_layer_norm_output_statistics(self):
        x = Tensor(np.random.default_rng(0).normal(size=(4, 6)))
        out = layer_norm(x, Tensor(np.ones(6)), Tensor(np.zeros(6)))
        np.testing.assert_allclose(out.data.mean(axis=-1), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.data.std(axis=-1), 1.0, atol=1e-3)

    def test_gather_out_of_range(self):
        with pytest.raises(ShapeError):
            gather(Tensor(np.ones((3, 2))), [0, 3])

    def test_sinusoidal_features_shape(self):
        feats = sinusoidal_features(np.array([0.0, 0.5, 1.0]), 8)
        assert feats.shape == (3, 8)
        np.testing.assert_allclose(feats[0], [0, 0, 0, 0, 1, 1, 1, 1], atol=1e-6)

    def test_glorot_limit(self):
        w = glorot(np.random.default_rng(0), 10, 20)
        assert w.shape == (10, 20)
        assert np.abs(w).max() <= math.sqrt(6.0 / 30.0) + 1e-6


class TestBackward:
    def test_square_gradient(self):
        x = Tensor(np.array(3.0), requires_grad=True)
        (x * x).backward()
        assert float(x.grad) == pytest.approx(6.0)

    def test_broadcast_gradient_is_summed(self):
        x = Tensor(np.ones((4, 3)), requires_grad=True)
        b = Tensor(np.zeros(3), requires_grad=True)
        (x + b).sum().backward()
        np.testing.assert_allclose(b.grad, [4.0, 4.0, 4.0])

    def test_detach_blocks_gradient(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = Tensor(np.array([1.0]), requires_grad=True)
        (x.detach() * x + y * 0.0).sum().backward()
        np.testing.assert_allclose(x.grad, [2.0])

    def test_relu_gradient_mask(self):
        x = Tensor(np.array([-1.0, 2.0]), requires_grad=True)
        relu(x).sum().backward()
        np.testing.assert_allclose(x.grad, [0.0, 1.0])

    def test_concat_splits_gradient(self):
        a = Tensor(np.ones((2, 1)), requires_grad=True)
        b = Tensor(np.ones((2, 2)), requires_grad=True)
        (concat([a, b], axis=-1) * np.array([1.0, 2.0, 3.0])).sum().backward()
        np.testing.assert_allclose(a.grad, [[1.0], [1.0]])
        np.testing.assert_allclose(b.grad, [[2.0, 3.0], [2.0, 3.0]])

    def test_second_backward_needs_reset(self):
        x = Tensor(np.array(1.0), requires_grad=True)
        (x * 2.0).backward()
        with pytest.raises(TapeError):
            (x * 3.0).backward()
        reset_tape()
        x.grad = None
        (x * 3.0).backward()
        assert float(x.grad) == pytest.approx(3.0)

    def test_no_grad_records_nothing(self):
        x = Tensor(np.array(1.0), requires_grad=True)
        with no_grad():
            y = x * 2.0
        assert not y.requires_grad

    def test_non_scalar_loss(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ShapeError):
            (x * 2.0).backward()


class TestOptim:
    def test_first_adam_step_moves_by_lr(self):
        params = ParameterSet()
        w = params.add("w", np.array([1.0, -1.0]))
        w.grad = np.array([0.3, -5.0], dtype=np.float32)
        adam_step(params, lr=0.1)
        np.testing.assert_allclose(params["w"].data, [0.9, -0.9], atol=1e-5)
        assert params["w"].grad is None
        assert params.step == 1

    def test_frozen_set_is_not_updated(self):
        params = ParameterSet()
        params.add("w", np.ones(2))
        params.freeze()
        with pytest.raises(FrozenError):
            adam_step(params, lr=0.1)
        np.testing.assert_allclose(params["w"].data, 1.0)

    def test_missing_gradient(self):
        params = ParameterSet()
        params.add("w", np.ones(2))
        with pytest.raises(TapeError):
            adam_step(params, lr=0.1)

    def test_clip_grad_norm(self):
        params = ParameterSet()
        params.add("w", np.zeros(2)).grad = np.array([3.0, 4.0], dtype=np.float32)
        norm = clip_grad_norm(params, 1.0)
        assert norm == pytest.approx(5.0)
        np.testing.assert_allclose(params["w"].grad, [0.6, 0.8], rtol=1e-5)

    def test_state_dict_round_trip(self):
        params = ParameterSet()
        params.add("a", np.arange(4).reshape(2, 2))
        params.add("b", np.zeros(3))
        assert params.count() == 7
        assert params.count("a") == 4
        other = ParameterSet()
        other.add("a", np.zeros((2, 2)))
        other.add("b", np.ones(3))
        other.load_state_dict(params.state_dict())
        np.testing.assert_array_equal(other["a"].data, params["a"].data)

    def test_load_wrong_shape(self):
        params = ParameterSet()
        params.add("a", np.zeros(2))
        with pytest.raises(ShapeError):
            params.load_state_dict({"a": np.zeros(3)})


class TestGradCheck:
    def test_mlp_with_layer_norm(self):
        rng = np.random.default_rng(0)
        params = ParameterSet()
        params.add("w1", glorot(rng, 4, 6))
        params.add("b1", np.zeros(6))
        params.add("g", np.ones(6))
        params.add("beta", np.zeros(6))
        params.add("w2", glorot(rng, 6, 2))
        x = rng.normal(size=(5, 4))
        y = rng.normal(size=(5, 2))

        def f(p):
            h = layer_norm((Tensor(x) @ p["w1"] + p["b1"]).tanh(), p["g"], p["beta"])
            return mse(h @ p["w2"], y)
        assert grad_check(f, params) < 1e-3

    def test_softmax_cross_entropy(self):
        rng = np.random.default_rng(1)
        params = ParameterSet()
        params.add("w", glorot(rng, 3, 4))
        x = rng.normal(size=(6, 3))
        labels = rng.integers(0, 4, size=6)
        assert grad_check(lambda p: cross_entropy(Tensor(x) @ p["w"], labels), params) < 1e-3

    def test_attention(self):
        rng = np.random.default_rng(2)
        params = ParameterSet()
        params.add("q", rng.normal(size=(2, 3, 4)))
        params.add("k", rng.normal(size=(2, 5, 4)))
        params.add("v", rng.normal(size=(2, 5, 4)))
        params.add("o", glorot(rng, 4, 3))

        def f(p):
            return multihead_attention(p["q"], p["k"], p["v"], 2, p["o"]).sum()
        assert grad_check(f, params) < 1e-3

    def test_params_restored_to_float32(self):
        params = ParameterSet()
        params.add("w", np.ones(3))
        grad_check(lambda p: (p["w"] * p["w"]).sum(), params)
        assert params["w"].data.dtype == np.float32
        assert params["w"].grad is None

    def test_small_gradient_error_shows_in_absolute_error(self):
        params = ParameterSet()
        params.add("w", np.ones(3))

        # the detached copy halves the analytic gradient
        def f(p):
            return (p["w"] + p["w"].detach()).sum() * 1e-6
        rel, err = grad_check_errors(f, params)
        assert rel < 1e-3
        assert err == pytest.approx(1e-6, rel=1e-3)
        assert grad_check(f, params, floor=1e-9) == pytest.approx(0.5, rel=1e-3)


class TestAttention:
    def test_output_shape(self):
        rng = np.random.default_rng(0)
        q = Tensor(rng.normal(size=(2, 3, 8)))
        kv = Tensor(rng.normal(size=(2, 5, 8)))
        out = multihead_attention(q, kv, kv, 4, Tensor(glorot(rng, 8, 6)))
        assert out.shape == (2, 3, 6)

    def test_unbatched_input(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(size=(3, 4)))
        out = multihead_attention(x, x, x, 2, Tensor(np.eye(4)))
        assert out.shape == (3, 4)

    def test_uniform_keys_average_values(self):
        q = Tensor(np.ones((1, 1, 4)))
        k = Tensor(np.zeros((1, 3, 4)))
        v = Tensor(np.arange(12, dtype=np.float32).reshape(1, 3, 4))
        out = multihead_attention(q, k, v, 2, Tensor(np.eye(4)))
        np.testing.assert_allclose(out.data[0, 0], v.data[0].mean(axis=0), rtol=1e-5)

    def test_heads_must_divide(self):
        x = Tensor(np.ones((1, 2, 6)))
        with pytest.raises(ShapeError):
            multihead_attention(x, x, x, 4, Tensor(np.eye(6)))
