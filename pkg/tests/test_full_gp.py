"""Exact GP posterior, KL, likelihood, and objective gradients."""

import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from pacgp.bound import BoundConfig
from pacgp.full_gp import (
    FullGPState,
    full_objective_grad,
    full_predict,
    kl_full,
    nll_full,
    objective_value,
)
from pacgp.kernels import HyperParams, MeanFunction, gram
from pacgp.losses import LossSpec


def make_state(n=25, d=2, seed=0, mean_const=0.1, log_nv=math.log(0.05), ard=True):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = np.sin(1.3 * X[:, 0]) - 0.4 * X[:, -1] + 0.3 * rng.normal(size=n)
    ls = rng.uniform(-0.4, 0.4, size=d if ard else 1)
    hyper = HyperParams(ls, rng.uniform(-0.3, 0.3), ard=ard)
    return FullGPState(hyper, MeanFunction(mean_const), log_nv, X, y)


BOUND_CFG = BoundConfig(loss=LossSpec("zero_one", epsilon=0.6))


class TestFullPredict:
    def test_zero_residuals_give_prior_mean(self):
        state = make_state()
        state = FullGPState(state.hyper, state.mean, state.log_noise_variance,
                            state.train_inputs,
                            np.full(state.n_train, state.mean.constant))
        mom = full_predict(state, np.random.default_rng(1).normal(size=(6, 2)))
        assert np.allclose(mom.mean, state.mean.constant, atol=1e-12)

    def test_interpolation_limit_at_tiny_noise(self):
        state = make_state(log_nv=math.log(1e-10))
        mom = full_predict(state, state.train_inputs)
        assert np.max(np.abs(mom.mean - state.train_targets)) < 1e-4
        assert np.max(mom.var) < 1e-4

    def test_single_point_closed_form(self):
        state = make_state(n=1)
        x_star = np.array([[0.3, -0.7]])
        k = gram(state.hyper, x_star, state.train_inputs)[0, 0]
        k11 = math.exp(state.hyper.log_signal_variance)
        m = state.mean.constant
        y1 = state.train_targets[0]
        expected = m + k * (y1 - m) / (k11 + state.noise_variance())
        assert full_predict(state, x_star).mean[0] == pytest.approx(expected, abs=1e-12)

    def test_variance_bounded_by_signal_variance(self):
        state = make_state(n=40)
        mom = full_predict(state, np.random.default_rng(2).normal(size=(30, 2)))
        assert np.all(mom.var <= math.exp(state.hyper.log_signal_variance) + 1e-12)
        assert np.all(mom.var >= 0.0)

    def test_dimension_check(self):
        state = make_state()
        with pytest.raises(ValueError):
            full_predict(state, np.zeros((3, 5)))


class TestKlFull:
    def test_huge_noise_collapses_kl(self):
        state = make_state(log_nv=math.log(1e8))
        assert kl_full(state) < 1e-4

    def test_matches_eigenvalue_form(self):
        for seed in range(4):
            state = make_state(n=50, seed=seed)
            K = gram(state.hyper, state.train_inputs, state.train_inputs)
            lam, E = np.linalg.eigh(K)
            sn2 = state.noise_variance()
            proj = E.T @ (state.train_targets - state.mean.constant)
            kl_eig = (0.5 * np.sum(np.log((lam + sn2) / sn2) - lam / (lam + sn2))
                      + 0.5 * np.sum(lam * proj**2 / (lam + sn2) ** 2))
            assert kl_full(state) == pytest.approx(kl_eig, rel=1e-8)

    def test_single_point_scalar_formula(self):
        state = make_state(n=1)
        k11 = math.exp(state.hyper.log_signal_variance)
        sn2 = state.noise_variance()
        r = state.train_targets[0] - state.mean.constant
        s = k11 + sn2
        expected = (0.5 * math.log(s) - 0.5 * math.log(sn2) - 0.5 * k11 / s
                    + 0.5 * r**2 * k11 / s**2)
        assert kl_full(state) == pytest.approx(expected, abs=1e-12)

    def test_nonnegative_and_permutation_invariant(self):
        state = make_state(n=30)
        kl = kl_full(state)
        assert kl >= 0.0
        perm = np.random.default_rng(3).permutation(30)
        shuffled = FullGPState(state.hyper, state.mean, state.log_noise_variance,
                               state.train_inputs[perm], state.train_targets[perm])
        assert kl_full(shuffled) == pytest.approx(kl, rel=1e-10)


class TestNllFull:
    def test_single_point_gaussian_formula(self):
        state = make_state(n=1, mean_const=0.0)
        sn2 = state.noise_variance()
        k11 = math.exp(state.hyper.log_signal_variance)
        y = state.train_targets[0]
        s = k11 + sn2
        expected = 0.5 * math.log(s) + 0.5 * math.log(2 * math.pi) + y**2 / (2 * s)
        assert nll_full(state) == pytest.approx(expected, abs=1e-12)

    def test_matches_direct_density(self):
        for seed in range(3):
            state = make_state(n=20, seed=seed)
            K = gram(state.hyper, state.train_inputs, state.train_inputs)
            S = K + state.noise_variance() * np.eye(20)
            direct = -multivariate_normal(
                mean=np.full(20, state.mean.constant), cov=S
            ).logpdf(state.train_targets)
            assert nll_full(state) == pytest.approx(direct, abs=1e-10)

    def test_permutation_invariance(self):
        state = make_state(n=15)
        perm = np.random.default_rng(5).permutation(15)
        shuffled = FullGPState(state.hyper, state.mean, state.log_noise_variance,
                               state.train_inputs[perm], state.train_targets[perm])
        assert nll_full(shuffled) == pytest.approx(nll_full(state), rel=1e-12)


class TestFullObjectiveGrad:
    @pytest.mark.parametrize("objective", ["pac_kl", "pac_sqrt", "nll"])
    def test_matches_finite_differences(self, objective):
        state = make_state(n=30)
        analytic = full_objective_grad(state, objective, BOUND_CFG)
        flat = state.flat_params()
        step = 1e-6
        fd = np.empty_like(flat)
        for i in range(flat.size):
            plus, minus = flat.copy(), flat.copy()
            plus[i] += step
            minus[i] -= step
            fd[i] = (objective_value(state.with_flat_params(plus), objective, BOUND_CFG)
                     - objective_value(state.with_flat_params(minus), objective,
                                       BOUND_CFG)) / (2 * step)
        scale = max(np.max(np.abs(fd)), 1e-8)
        assert np.max(np.abs(analytic - fd)) / scale < 1e-4

    def test_grid_penalty_contributes_no_gradient(self):
        """The hyperparameter-cardinality term is a constant: doubling it
        shifts the objective but moves no gradient through the parameters
        beyond the klinv weighting."""
        state = make_state(n=20)
        g1 = full_objective_grad(state, "nll", BOUND_CFG)
        g2 = full_objective_grad(state, "nll",
                                 BoundConfig(loss=LossSpec("zero_one", 0.6),
                                             grid_digits=4))
        assert np.allclose(g1, g2, atol=1e-14)

    def test_objective_values_sane(self):
        state = make_state(n=20)
        b = objective_value(state, "pac_kl", BOUND_CFG)
        b_pin = objective_value(state, "pac_sqrt", BOUND_CFG)
        assert 0.0 <= b <= 1.0
        assert b <= b_pin + 1e-12
