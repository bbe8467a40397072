"""MLP forward/backward against finite differences and shape contracts."""

import numpy as np
import pytest

from modalsub.errors import ModalSubError
from modalsub.network import (
    MlpParams,
    gelu,
    gelu_derivative,
    mlp_backward,
    mlp_forward,
    mlp_forward_cached,
    mlp_init,
    mlp_input_vjp,
    mlp_pullback,
    pack_gradients,
    pack_params,
    unpack_params,
)

from _fd import fd_gradient, rel_error

WIDTHS = [3, 8, 8, 5]


def nonzero_params(seed=0):
    """Init with a non-zero last layer so output gradients are exercised."""
    params = mlp_init(WIDTHS, seed)
    rng = np.random.default_rng(seed + 100)
    weights = list(params.weights)
    biases = list(params.biases)
    weights[-1] = 0.3 * rng.standard_normal(weights[-1].shape)
    biases[-1] = 0.3 * rng.standard_normal(biases[-1].shape)
    return MlpParams(weights=tuple(weights), biases=tuple(biases))


class TestGelu:
    def test_known_values(self):
        # tanh approximation: gelu(0) = 0, large |x| asymptotes
        assert gelu(np.array([0.0]))[0] == 0.0
        assert gelu(np.array([10.0]))[0] == pytest.approx(10.0, abs=1e-6)
        assert gelu(np.array([-10.0]))[0] == pytest.approx(0.0, abs=1e-6)
        # reference value of the tanh-form GELU at 1.0
        x = 1.0
        inner = np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)
        assert gelu(np.array([x]))[0] == pytest.approx(
            0.5 * (1.0 + np.tanh(inner)), rel=1e-12)

    def test_derivative_matches_fd(self):
        xs = np.linspace(-3.0, 3.0, 25)
        fd = (gelu(xs + 1e-6) - gelu(xs - 1e-6)) / 2e-6
        assert np.allclose(gelu_derivative(xs), fd, atol=1e-8)


class TestInitAndPacking:
    def test_zero_init_last_layer(self):
        params = mlp_init(WIDTHS, seed=0)
        assert np.all(params.weights[-1] == 0.0)
        assert np.all(params.biases[-1] == 0.0)
        # hidden layers are not zero
        assert np.any(params.weights[0] != 0.0)
        out = mlp_forward(params, np.ones(3))
        assert np.all(out == 0.0)

    def test_init_deterministic(self):
        a = mlp_init(WIDTHS, seed=7)
        b = mlp_init(WIDTHS, seed=7)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)
        c = mlp_init(WIDTHS, seed=8)
        assert not np.array_equal(a.weights[0], c.weights[0])

    def test_widths_property(self):
        params = mlp_init(WIDTHS, seed=0)
        assert params.widths == WIDTHS
        assert params.num_layers == len(WIDTHS) - 1
        expect = sum(WIDTHS[i] * WIDTHS[i + 1] + WIDTHS[i + 1]
                     for i in range(len(WIDTHS) - 1))
        assert params.num_params == expect

    def test_pack_unpack_round_trip(self):
        params = nonzero_params()
        flat = pack_params(params)
        assert flat.shape == (params.num_params,)
        back = unpack_params(flat, WIDTHS)
        for wa, wb in zip(params.weights, back.weights):
            assert np.array_equal(wa, wb)
        for ba, bb in zip(params.biases, back.biases):
            assert np.array_equal(ba, bb)

    def test_rejects_bad_widths(self):
        with pytest.raises(ModalSubError):
            mlp_init([3], seed=0)
        with pytest.raises(ModalSubError):
            mlp_init([3, 0, 2], seed=0)

    def test_rejects_mismatched_shapes(self):
        with pytest.raises(ModalSubError):
            MlpParams(weights=(np.zeros((4, 3)),), biases=(np.zeros(5),))
        with pytest.raises(ModalSubError):
            MlpParams(
                weights=(np.zeros((4, 3)), np.zeros((2, 5))),
                biases=(np.zeros(4), np.zeros(2)),
            )


class TestForward:
    def test_single_and_batch_agree(self):
        params = nonzero_params()
        rng = np.random.default_rng(1)
        zs = rng.standard_normal((6, 3))
        batch = mlp_forward(params, zs)
        assert batch.shape == (6, 5)
        for i in range(6):
            single = mlp_forward(params, zs[i])
            assert single.shape == (5,)
            assert np.allclose(single, batch[i], atol=1e-15)

    def test_rejects_wrong_width(self):
        params = nonzero_params()
        with pytest.raises(ModalSubError):
            mlp_forward(params, np.zeros(4))

    def test_cached_forward_matches(self):
        params = nonzero_params()
        zs = np.random.default_rng(2).standard_normal((4, 3))
        out, cache = mlp_forward_cached(params, zs)
        assert np.array_equal(out, mlp_forward(params, zs))
        assert cache is not None


class TestBackward:
    def test_parameter_gradient_matches_fd(self):
        params = nonzero_params()
        rng = np.random.default_rng(3)
        zs = rng.standard_normal((5, 3))
        target = rng.standard_normal((5, 5))

        def loss_flat(flat):
            p = unpack_params(flat, WIDTHS)
            r = mlp_forward(p, zs) - target
            return 0.5 * float(np.sum(r * r))

        out, cache = mlp_forward_cached(params, zs)
        w_grads, b_grads = mlp_backward(params, cache, out - target)
        analytic = pack_gradients(w_grads, b_grads)
        fd = fd_gradient(loss_flat, pack_params(params), eps=1e-6)
        assert rel_error(analytic, fd) < 1e-7

    def test_input_gradient_matches_fd(self):
        params = nonzero_params()
        rng = np.random.default_rng(4)
        z = rng.standard_normal(3)
        cot = rng.standard_normal(5)

        def scalar(zin):
            return float(mlp_forward(params, zin) @ cot)

        analytic = mlp_input_vjp(params, z, cot)
        fd = fd_gradient(scalar, z, eps=1e-7)
        assert rel_error(analytic, fd) < 1e-7

    def test_pullback_matches_backward(self):
        params = nonzero_params()
        rng = np.random.default_rng(5)
        zs = rng.standard_normal((4, 3))
        cot = rng.standard_normal((4, 5))
        w1, b1 = mlp_pullback(params, zs, cot)
        out, cache = mlp_forward_cached(params, zs)
        w2, b2 = mlp_backward(params, cache, cot)
        for a, b in zip(w1, w2):
            assert np.allclose(a, b, atol=1e-15)
        for a, b in zip(b1, b2):
            assert np.allclose(a, b, atol=1e-15)

    def test_zero_cotangent_gives_zero_grads(self):
        params = nonzero_params()
        zs = np.zeros((2, 3))
        out, cache = mlp_forward_cached(params, zs)
        w_grads, b_grads = mlp_backward(params, cache, np.zeros_like(out))
        assert all(np.all(w == 0) for w in w_grads)
        assert all(np.all(b == 0) for b in b_grads)
