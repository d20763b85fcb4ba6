"""Network tests: architecture conformance, loss arithmetic, gradient checks."""

import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import correlate2d

from snakezero import env
from snakezero.errors import InvalidConfiguration, NumericError
from snakezero.net import (
    LOG_CLAMP,
    NetOutput,
    NetworkParams,
    _conv,
    _maxpool,
    activation_shapes,
    backward,
    batch_loss,
    forward,
    gradient_check,
    init_params,
    loss,
    make_evaluator,
    param_shapes,
    sgd_update,
)
from snakezero.search import SearchConfig, run_search

from conftest import make_state


def random_batch(rng, n=10, size=3):
    """Generic continuous inputs keep activations away from kink points."""
    feats = rng.normal(size=(size, env.FEATURE_PLANES, n, n))
    pis = rng.dirichlet(np.ones(4), size=size)
    zs = rng.normal(size=size)
    return feats, pis, zs


def noisy_params(seed, n=10, bias_scale=0.05):
    """Init params, then perturb biases so no pre-activation sits exactly at 0."""
    params = init_params(seed, n)
    rng = np.random.default_rng(seed + 1)
    for name, tensor in params.tensors.items():
        if name.endswith("_b"):
            tensor[...] = rng.normal(scale=bias_scale, size=tensor.shape).astype(
                tensor.dtype
            )
    return params


class TestInit:
    def test_param_count_n10(self):
        # [DERIVED] 640 + 910 + 2*50,200 + 2*20,100 + 404 + 101 = 142,655
        assert init_params(0, 10).param_count == 142_655

    def test_param_count_n6(self):
        # [DERIVED] flattened width 10*(6/2)^2 = 90; same counting procedure
        params = init_params(0, 6)
        assert params.tensors["fc_p1_w"].shape == (200, 90)
        expected = 640 + 910 + 2 * (90 * 200 + 200) + 2 * 20_100 + 404 + 101
        assert params.param_count == expected == 78_655

    def test_same_seed_bit_identical(self):
        a, b = init_params(42, 10), init_params(42, 10)
        for name in a.tensors:
            assert np.array_equal(a.tensors[name], b.tensors[name])

    def test_different_seeds_differ(self):
        a, b = init_params(1, 6), init_params(2, 6)
        assert not np.array_equal(a.tensors["conv1_w"], b.tensors["conv1_w"])

    def test_biases_and_momentum_zero(self):
        params = init_params(7, 10)
        for name, tensor in params.tensors.items():
            if name.endswith("_b"):
                assert not tensor.any()
        for buf in params.momentum.values():
            assert not buf.any()

    def test_weights_within_fan_in_bound(self):
        params = init_params(3, 10)
        for name, tensor in params.tensors.items():
            if name.endswith("_w"):
                bound = 1.0 / math.sqrt(np.prod(tensor.shape[1:]))
                assert np.all(np.abs(tensor) <= bound)

    @pytest.mark.parametrize("n", [3, 5, 9, 0, 1])
    def test_odd_or_tiny_board_rejected(self, n):
        with pytest.raises(InvalidConfiguration):
            param_shapes(n)


class TestForward:
    def test_zero_network_uniform(self):
        # [TRIVIAL] all-zero weights: logits 0, policy 0.25 each, value 0
        params = init_params(0, 10)
        for tensor in params.tensors.values():
            tensor[...] = 0
        state = env.new_game(10, np.random.default_rng(0))
        out = forward(params, env.encode_features(state))
        assert np.array_equal(out.logits, np.zeros(4))
        assert np.array_equal(out.policy, np.full(4, 0.25))
        assert out.value == 0.0

    def test_shape_chain(self):
        # [PAPER] 7x10x10 -> 10x10x10 -> 10x10x10 -> 10x5x5 -> 250 -> (4, 1)
        params = init_params(0, 10)
        state = env.new_game(10, np.random.default_rng(1))
        chain = activation_shapes(params, env.encode_features(state))
        assert chain == [
            (7, 10, 10),
            (10, 10, 10),
            (10, 10, 10),
            (10, 5, 5),
            (250,),
            (4, 1),
        ]

    def test_conv_matches_scipy_correlate(self):
        # [DERIVED] independent oracle: same-padding correlation per channel pair
        rng = np.random.default_rng(5)
        x = rng.normal(size=(2, 7, 6, 6))
        w = rng.normal(size=(10, 7, 3, 3))
        b = rng.normal(size=10)
        pre, _ = _conv(x, w, b)
        for bi in range(2):
            for f in range(10):
                expected = b[f] + sum(
                    correlate2d(x[bi, c], w[f, c], mode="same") for c in range(7)
                )
                assert np.allclose(pre[bi, f], expected, atol=1e-12)

    def test_maxpool_matches_naive(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(3, 4, 8, 8))
        out, _ = _maxpool(x)
        for i in range(4):
            for j in range(4):
                block = x[:, :, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2]
                assert np.array_equal(out[:, :, i, j], block.max(axis=(2, 3)))

    def test_maxpool_ties_route_to_first_cell(self):
        x = np.full((1, 1, 2, 2), 3.5)
        _, idx = _maxpool(x)
        assert idx[0, 0, 0, 0] == 0

    def test_forward_pure_and_deterministic(self):
        params = init_params(9, 6)
        state = env.new_game(6, np.random.default_rng(2))
        feats = env.encode_features(state)
        snapshot = {k: v.copy() for k, v in params.tensors.items()}
        a = forward(params, feats)
        b = forward(params, feats)
        assert np.array_equal(a.logits, b.logits)
        assert np.array_equal(a.policy, b.policy)
        assert a.value == b.value
        for name in snapshot:
            assert np.array_equal(params.tensors[name], snapshot[name])

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_policy_is_distribution(self, seed):
        rng = np.random.default_rng(seed)
        params = noisy_params(seed % 1000, 6)
        out = forward(params, rng.normal(size=(7, 6, 6)))
        assert np.all(np.isfinite(out.logits))
        assert np.all(out.policy >= 0)
        assert abs(out.policy.sum() - 1.0) < 1e-12

    def test_shape_mismatch_rejected(self):
        params = init_params(0, 10)
        with pytest.raises(InvalidConfiguration):
            forward(params, np.zeros((7, 6, 6)))
        with pytest.raises(InvalidConfiguration):
            forward(params, np.zeros((6, 10, 10)))


class TestLoss:
    def test_perfect_prediction_zero(self):
        # [TRIVIAL] v=z, one-hot pi matched by p, no regularization
        out = NetOutput(
            logits=np.zeros(4), policy=np.array([0.0, 0.0, 1.0, 0.0]), value=0.7
        )
        assert loss(out, [0, 0, 1, 0], 0.7) == 0.0

    def test_uniform_mismatch(self):
        # [DERIVED] (0-1)^2 - sum(0.25*log 0.25) = 1 + ln 4 = 2.386294...
        out = NetOutput(logits=np.zeros(4), policy=np.full(4, 0.25), value=0.0)
        got = loss(out, np.full(4, 0.25), 1.0)
        assert abs(got - (1.0 + math.log(4.0))) < 1e-12

    def test_l2_strictly_increases(self):
        params = init_params(1, 6)
        out = NetOutput(logits=np.zeros(4), policy=np.full(4, 0.25), value=0.0)
        base = loss(out, np.full(4, 0.25), 0.0, params, c_l2=0.0)
        assert loss(out, np.full(4, 0.25), 0.0, params, c_l2=1e-4) > base

    def test_zero_probability_clamped_and_logged(self, caplog):
        out = NetOutput(
            logits=np.zeros(4), policy=np.array([1.0, 0.0, 0.0, 0.0]), value=0.0
        )
        with caplog.at_level(logging.WARNING, logger="snakezero.net"):
            got = loss(out, np.full(4, 0.25), 0.0)
        assert math.isfinite(got)
        assert abs(got - (-0.75 * math.log(LOG_CLAMP))) < 1e-9
        assert any("clamped" in rec.message for rec in caplog.records)

    def test_batch_loss_is_mean_of_singles(self):
        rng = np.random.default_rng(3)
        params = noisy_params(3, 6)
        feats, pis, zs = random_batch(rng, n=6, size=4)
        c_l2 = 1e-4
        singles = [
            loss(forward(params, feats[i]), pis[i], zs[i], params, c_l2)
            for i in range(4)
        ]
        assert abs(batch_loss(params, feats, pis, zs, c_l2) - np.mean(singles)) < 1e-10


class TestGradients:
    def test_finite_difference_check(self):
        # [DERIVED] central differences, h=1e-4, float64: max rel err < 1e-4
        params = noisy_params(11, 10)
        worst = 0.0
        for batch_seed in range(5):
            rng = np.random.default_rng(100 + batch_seed)
            feats, pis, zs = random_batch(rng, n=10, size=3)
            err = gradient_check(
                params, feats, pis, zs, c_l2=1e-4, samples=200, rng=batch_seed
            )
            worst = max(worst, err)
        assert worst < 1e-4

    def test_duplicate_example_mean_invariance(self):
        # [TRIVIAL] batch mean over identical rows equals the single-row gradient
        params = noisy_params(4, 6)
        rng = np.random.default_rng(8)
        feats, pis, zs = random_batch(rng, n=6, size=1)
        doubled = (
            np.repeat(feats, 2, axis=0),
            np.repeat(pis, 2, axis=0),
            np.repeat(zs, 2),
        )
        g1, l1 = backward(params, feats, pis, zs, c_l2=1e-4)
        g2, l2 = backward(params, *doubled, c_l2=1e-4)
        assert abs(l1 - l2) < 1e-12
        for name in g1:
            assert np.allclose(g1[name], g2[name], atol=1e-12)

    def test_softmax_couples_all_logits(self):
        # [TRIVIAL] one-hot target still moves every head bias (grad = p - pi)
        params = noisy_params(5, 6)
        rng = np.random.default_rng(9)
        feats = rng.normal(size=(1, 7, 6, 6))
        pis = np.array([[1.0, 0.0, 0.0, 0.0]])
        grads, _ = backward(params, feats, pis, np.zeros(1), c_l2=0.0)
        assert np.all(grads["fc_p3_b"][1:] > 0)
        assert grads["fc_p3_b"][0] < 0

    def test_l2_gradient_term(self):
        params = noisy_params(6, 6)
        rng = np.random.default_rng(10)
        feats, pis, zs = random_batch(rng, n=6, size=2)
        bare, _ = backward(params, feats, pis, zs, c_l2=0.0)
        reg, _ = backward(params, feats, pis, zs, c_l2=1e-3)
        for name, tensor in params.tensors.items():
            expected = bare[name] + 2e-3 * tensor.astype(np.float64)
            assert np.allclose(reg[name], expected, atol=1e-12)


class TestSgdUpdate:
    @staticmethod
    def scalar_params(theta):
        return NetworkParams(
            n=10,
            tensors={"w": np.array([theta], dtype=np.float64)},
            momentum={"w": np.zeros(1)},
        )

    def test_plain_sgd_step(self):
        # [TRIVIAL] momentum 0, lr 0.1, theta 1, g 2 -> 0.8
        params = self.scalar_params(1.0)
        sgd_update(params, {"w": np.array([2.0])}, lr=0.1, momentum=0.0)
        assert abs(params.tensors["w"][0] - 0.8) < 1e-15

    def test_momentum_accumulates(self):
        # [DERIVED] g=1 twice, m=0.7, lr=0.001: steps 0.001 then 0.0017
        params = self.scalar_params(1.0)
        grads = {"w": np.ones(1)}
        sgd_update(params, grads, lr=0.001, momentum=0.7)
        assert abs(params.tensors["w"][0] - 0.999) < 1e-15
        sgd_update(params, grads, lr=0.001, momentum=0.7)
        assert abs(params.tensors["w"][0] - (0.999 - 0.0017)) < 1e-15

    def test_zero_gradient_fixed_point(self):
        params = self.scalar_params(0.37)
        sgd_update(params, {"w": np.zeros(1)}, lr=0.5, momentum=0.9)
        assert params.tensors["w"][0] == 0.37

    def test_nonfinite_gradient_aborts_untouched(self):
        params = init_params(2, 6)
        rng = np.random.default_rng(12)
        feats, pis, zs = random_batch(rng, n=6, size=2)
        grads, _ = backward(params, feats, pis, zs)
        grads["fc_v2_w"] = grads["fc_v2_w"].copy()
        grads["fc_v2_w"][0, 0] = np.nan
        before = {k: v.copy() for k, v in params.tensors.items()}
        with pytest.raises(NumericError):
            sgd_update(params, grads)
        for name in before:
            assert np.array_equal(params.tensors[name], before[name])
            assert not params.momentum[name].any()

    def test_tiny_step_strictly_decreases_loss(self):
        # descent-direction sanity at lr=1e-6, tolerance 0, in float64
        params = noisy_params(13, 6).astype(np.float64)
        state = env.new_game(6, np.random.default_rng(21))
        feats = env.encode_features(state)[None].astype(np.float64)
        pis = np.zeros((1, 4))
        legal = env.legal_actions(state)
        pis[0, list(legal)] = 1.0 / len(legal)
        zs = np.array([0.5])
        before = batch_loss(params, feats, pis, zs, c_l2=1e-4)
        grads, _ = backward(params, feats, pis, zs, c_l2=1e-4)
        sgd_update(params, grads, lr=1e-6, momentum=0.0)
        after = batch_loss(params, feats, pis, zs, c_l2=1e-4)
        assert after < before


class TestEvaluatorIntegration:
    def test_network_guided_search(self):
        params = init_params(17, 6)
        state = make_state(
            6,
            cells=(14, 8, 7),
            dirs=(env.DOWN, env.RIGHT, env.RIGHT),
            apple=27,
        )
        result = run_search(
            state, SearchConfig(budget=24, time_limit=100), make_evaluator(params)
        )
        assert result.visits.sum() == 24
        priors, value = make_evaluator(params)(state)
        assert abs(priors.sum() - 1.0) < 1e-12
        assert math.isfinite(value)
