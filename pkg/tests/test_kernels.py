"""Squared-exponential kernel values, gradients, and factorization policy."""

import math

import numpy as np
import pytest
import torch

from pacgp.kernels import (
    CholeskyError,
    HyperParams,
    MeanFunction,
    gram,
    gram_grad,
    jittered_cholesky,
)

RNG = np.random.default_rng(2024)


def random_hyper(d, ard=True, rng=RNG):
    return HyperParams(rng.uniform(-0.5, 0.5, size=d if ard else 1),
                       rng.uniform(-0.5, 0.5), ard=ard)


class TestHyperParams:
    def test_component_count(self):
        assert HyperParams(np.zeros(3), 0.0, ard=True).n_components == 4
        assert HyperParams(np.zeros(1), 0.0, ard=False).n_components == 2

    def test_vector_round_trip(self):
        h = random_hyper(4)
        back = HyperParams.from_vector(h.as_vector(), ard=True)
        assert np.array_equal(back.log_lengthscales, h.log_lengthscales)
        assert back.log_signal_variance == h.log_signal_variance

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            HyperParams(np.array([np.nan]), 0.0)
        with pytest.raises(ValueError):
            MeanFunction(math.inf)

    def test_isotropic_needs_single_lengthscale(self):
        with pytest.raises(ValueError):
            HyperParams(np.zeros(3), 0.0, ard=False)


class TestGram:
    def test_diagonal_is_signal_variance(self):
        h = random_hyper(3)
        X = RNG.normal(size=(6, 3))
        K = gram(h, X, X)
        assert np.allclose(np.diag(K), math.exp(h.log_signal_variance), atol=1e-14)

    def test_hand_evaluated_entry(self):
        # unit variance and lengthscale, squared distance 2 -> exp(-1)
        h = HyperParams(np.zeros(1), 0.0, ard=False)
        A = np.array([[0.0, 0.0]])
        B = np.array([[1.0, 1.0]])
        assert gram(h, A, B)[0, 0] == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_transpose_symmetry(self):
        h = random_hyper(2)
        A = RNG.normal(size=(5, 2))
        B = RNG.normal(size=(3, 2))
        assert np.allclose(gram(h, A, B), gram(h, B, A).T, atol=1e-15)

    def test_entries_bounded_by_signal_variance(self):
        h = random_hyper(2)
        A = RNG.normal(size=(10, 2))
        K = gram(h, A, A)
        assert np.all(K > 0.0)
        assert np.all(K <= math.exp(h.log_signal_variance) + 1e-15)

    def test_dimension_mismatch(self):
        h = random_hyper(2)
        with pytest.raises(ValueError):
            gram(h, RNG.normal(size=(4, 2)), RNG.normal(size=(4, 3)))
        with pytest.raises(ValueError):
            gram(random_hyper(3), RNG.normal(size=(4, 2)), RNG.normal(size=(4, 2)))

    def test_isotropic_equals_tied_ard(self):
        iso = HyperParams(np.array([0.37]), -0.2, ard=False)
        ard = HyperParams(np.full(3, 0.37), -0.2, ard=True)
        X = RNG.normal(size=(7, 3))
        Y = RNG.normal(size=(4, 3))
        assert np.allclose(gram(iso, X, Y), gram(ard, X, Y), atol=1e-14)


class TestGramGrad:
    def test_signal_variance_slice_is_gram(self):
        h = random_hyper(2)
        X = RNG.normal(size=(5, 2))
        grads = gram_grad(h, X, X)
        assert np.allclose(grads[-1], gram(h, X, X), atol=1e-15)

    @pytest.mark.parametrize("ard", [True, False])
    def test_matches_finite_differences(self, ard):
        h = random_hyper(3, ard=ard)
        A = RNG.normal(size=(3, 3))
        B = RNG.normal(size=(4, 3))
        grads = gram_grad(h, A, B)
        step = 1e-6
        vec = h.as_vector()
        for t in range(vec.size):
            plus, minus = vec.copy(), vec.copy()
            plus[t] += step
            minus[t] -= step
            fd = (gram(HyperParams.from_vector(plus, ard), A, B)
                  - gram(HyperParams.from_vector(minus, ard), A, B)) / (2 * step)
            assert np.max(np.abs(grads[t] - fd)) <= 1e-5 * max(np.max(np.abs(fd)), 1e-8)

    def test_isotropic_gradient_sums_ard_slices(self):
        iso = HyperParams(np.array([0.25]), 0.1, ard=False)
        ard = HyperParams(np.full(3, 0.25), 0.1, ard=True)
        A = RNG.normal(size=(5, 3))
        g_iso = gram_grad(iso, A, A)
        g_ard = gram_grad(ard, A, A)
        assert np.allclose(g_iso[0], g_ard[:3].sum(axis=0), atol=1e-12)


class TestJitteredCholesky:
    def test_clean_matrix_needs_no_jitter(self):
        h = random_hyper(2)
        X = RNG.normal(size=(8, 2))
        K = torch.as_tensor(gram(h, X, X))
        L, jitter = jittered_cholesky(K, math.exp(h.log_signal_variance))
        assert jitter == 0.0
        assert torch.allclose(L @ L.T, K, atol=1e-10)

    def test_duplicate_rows_get_jitter(self):
        h = HyperParams(np.zeros(1), 0.0, ard=False)
        X = np.vstack([np.ones((2, 2)), RNG.normal(size=(3, 2))])
        K = torch.as_tensor(gram(h, X, X))
        L, jitter = jittered_cholesky(K, 1.0)
        assert jitter > 0.0
        assert torch.all(torch.isfinite(L))

    def test_hopeless_matrix_raises(self):
        bad = -torch.eye(3, dtype=torch.float64)
        with pytest.raises(CholeskyError):
            jittered_cholesky(bad, 1.0)

    def test_gram_plus_jitter_positive_definite(self):
        for _ in range(5):
            h = random_hyper(2)
            X = RNG.normal(size=(20, 2))
            K = torch.as_tensor(gram(h, X, X))
            L, _ = jittered_cholesky(K, math.exp(h.log_signal_variance))
            assert torch.all(L.diagonal() > 0)
