"""Exact GP regression: posterior moments, closed-form KL to the prior, and
the marginal-likelihood baseline objective.

With S = K_NN + sigma_n^2 I and residual r = y - m_N, the posterior over the
latent training values has mean m_N + K S^{-1} r and covariance
K - K S^{-1} K, and its divergence from the prior reduces to

    KL = 1/2 ln det S - N/2 ln sigma_n^2 - 1/2 tr(K S^{-1}) + 1/2 r' S^{-1} K S^{-1} r.

Everything is computed through one shared Cholesky factor of S; the trace and
quadratic terms use the algebraic identities tr(K S^{-1}) = N - sigma_n^2 tr(S^{-1})
and r' S^{-1} K S^{-1} r = beta' r - sigma_n^2 beta' beta with beta = S^{-1} r,
so no explicit dense inverse is ever formed.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional

import numpy as np
import torch

from .binary_kl import klinv_torch
from .bound import BoundConfig, penalty_constant
from .kernels import DTYPE, HyperParams, MeanFunction, se_gram
from .losses import LossSpec, PredictiveMoments, gibbs_risk_torch

__all__ = [
    "FullGPState",
    "full_predict",
    "kl_full",
    "nll_full",
    "full_objective_grad",
    "FULL_OBJECTIVES",
]

FULL_OBJECTIVES = ("pac_kl", "pac_sqrt", "nll")

# Soft lower bound on sigma_n^2: the KL (and the certificate) diverge as the
# noise collapses, so the objective carries a quadratic log-space barrier
# below this floor.
NOISE_FLOOR = 1e-8
_LOG_NOISE_FLOOR = math.log(NOISE_FLOOR)
LOG_2PI = math.log(2.0 * math.pi)


@dataclasses.dataclass
class FullGPState:
    """A (possibly trained) exact GP regressor.

    The Cholesky cache is built lazily and is keyed to the current
    parameters; states are treated as immutable once trained.
    """

    hyper: HyperParams
    mean: MeanFunction
    log_noise_variance: float
    train_inputs: np.ndarray
    train_targets: np.ndarray

    def __post_init__(self) -> None:
        self.train_inputs = np.atleast_2d(np.asarray(self.train_inputs, dtype=float))
        self.train_targets = np.asarray(self.train_targets, dtype=float).ravel()
        if self.train_inputs.shape[0] != self.train_targets.size:
            raise ValueError("inputs and targets disagree on N")
        self.log_noise_variance = float(self.log_noise_variance)
        self._cache: Optional[dict] = None

    @property
    def n_train(self) -> int:
        return self.train_targets.size

    def noise_variance(self) -> float:
        return float(np.exp(self.log_noise_variance))

    # -- parameter vector layout: [log_lengthscales..., log_sv, log_nv] --

    def flat_params(self) -> np.ndarray:
        return np.append(self.hyper.as_vector(), self.log_noise_variance)

    def with_flat_params(self, vec: np.ndarray) -> "FullGPState":
        vec = np.asarray(vec, dtype=float)
        hyper = HyperParams.from_vector(vec[:-1], ard=self.hyper.ard)
        return FullGPState(
            hyper, self.mean, float(vec[-1]), self.train_inputs, self.train_targets
        )

    def _torch_params(self, requires_grad: bool = False) -> dict[str, torch.Tensor]:
        return {
            "log_ls": torch.tensor(
                self.hyper.log_lengthscales, dtype=DTYPE, requires_grad=requires_grad
            ),
            "log_sv": torch.tensor(
                self.hyper.log_signal_variance, dtype=DTYPE, requires_grad=requires_grad
            ),
            "log_nv": torch.tensor(
                self.log_noise_variance, dtype=DTYPE, requires_grad=requires_grad
            ),
        }

    def _with_torch_params(self, params: dict[str, torch.Tensor]) -> "FullGPState":
        hyper = HyperParams(
            params["log_ls"].detach().numpy().copy(),
            float(params["log_sv"].detach()),
            ard=self.hyper.ard,
        )
        return FullGPState(
            hyper, self.mean, float(params["log_nv"].detach()), self.train_inputs, self.train_targets
        )

    def factorization(self) -> dict:
        """Shared Cholesky of K + sigma_n^2 I plus derived solves (numpy views)."""
        if self._cache is None:
            with torch.no_grad():
                core = _core(self._torch_params(), self.train_inputs, self.train_targets,
                             self.mean.constant)
            self._cache = {k: v.numpy() for k, v in core.items()}
        return self._cache


def _core(params: dict[str, torch.Tensor], X: np.ndarray, y: np.ndarray,
          mean_const: float) -> dict[str, torch.Tensor]:
    """Cholesky-backed quantities shared by prediction, KL, and likelihood."""
    X_t = torch.as_tensor(X, dtype=DTYPE)
    y_t = torch.as_tensor(y, dtype=DTYPE)
    n = X_t.shape[0]
    K = se_gram(params["log_ls"], params["log_sv"], X_t, X_t)
    noise = torch.exp(params["log_nv"])
    S = K + noise * torch.eye(n, dtype=DTYPE)
    L = torch.linalg.cholesky(S)
    r = y_t - mean_const
    beta = torch.cholesky_solve(r[:, None], L)[:, 0]
    return {"K": K, "L": L, "r": r, "beta": beta}


def _train_moments(core: dict, mean_const: float) -> tuple[torch.Tensor, torch.Tensor]:
    """Predictive moments at the training inputs (noise-free variance)."""
    K, L, beta = core["K"], core["L"], core["beta"]
    mhat = mean_const + K @ beta
    U = torch.linalg.solve_triangular(L, K, upper=False)
    var = (K.diagonal() - (U * U).sum(dim=0)).clamp(min=0.0)
    return mhat, var


def _kl_value(core: dict, log_nv: torch.Tensor) -> torch.Tensor:
    L, r, beta = core["L"], core["r"], core["beta"]
    n = r.shape[0]
    noise = torch.exp(log_nv)
    logdet_s = 2.0 * torch.log(L.diagonal()).sum()
    L_inv = torch.linalg.solve_triangular(L, torch.eye(n, dtype=L.dtype), upper=False)
    tr_s_inv = (L_inv * L_inv).sum()
    quad = r @ beta - noise * (beta @ beta)
    return 0.5 * (logdet_s - n * log_nv - n + noise * tr_s_inv + quad)


def _nll_value(core: dict) -> torch.Tensor:
    L, r, beta = core["L"], core["r"], core["beta"]
    n = r.shape[0]
    return torch.log(L.diagonal()).sum() + 0.5 * n * LOG_2PI + 0.5 * (r @ beta)


def _noise_barrier(log_nv: torch.Tensor) -> torch.Tensor:
    return torch.relu(_LOG_NOISE_FLOOR - log_nv) ** 2


def _objective_torch(
    params: dict[str, torch.Tensor],
    X: np.ndarray,
    y: np.ndarray,
    mean_const: float,
    objective: str,
    bound_cfg: Optional[BoundConfig],
    loss: Optional[LossSpec],
    batch: Optional[np.ndarray] = None,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Scalar training objective plus trace diagnostics.

    For the certificate objectives the empirical risk may be estimated on a
    mini-batch (`batch` indexes into the training set); the divergence term
    always uses the full data.
    """
    if objective not in FULL_OBJECTIVES:
        raise ValueError(f"unknown full-GP objective {objective!r}")
    core = _core(params, X, y, mean_const)
    n = y.shape[0]
    aux: dict[str, float] = {}
    if objective == "nll":
        obj = _nll_value(core)
        aux["nll"] = float(obj.detach())
    else:
        if bound_cfg is None or loss is None:
            raise ValueError("certificate objectives need bound_cfg and loss")
        kl = _kl_value(core, params["log_nv"])
        mhat, var = _train_moments(core, mean_const)
        if batch is not None:
            q = gibbs_risk_torch(loss, y[batch], mhat[batch], var[batch])
        else:
            q = gibbs_risk_torch(loss, y, mhat, var)
        pen_const = penalty_constant(n, len(params["log_ls"]) + 1, bound_cfg)
        eps = (kl + pen_const) / n
        if objective == "pac_kl":
            obj = klinv_torch(q, eps)
        else:
            obj = q + torch.sqrt(eps / 2.0)
        aux["gibbs_train"] = float(q.detach())
        aux["kl_over_n"] = float(kl.detach()) / n
    return obj + _noise_barrier(params["log_nv"]), aux


def full_predict(state: FullGPState, X_star) -> PredictiveMoments:
    """Posterior predictive moments at new inputs (noise-free variance).

    The variance is the latent one, bounded by the prior signal variance;
    the additive observation noise is not included.
    """
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    if X_star.shape[1] != state.train_inputs.shape[1]:
        raise ValueError("test inputs have wrong dimension")
    params = state._torch_params()
    with torch.no_grad():
        X_t = torch.as_tensor(state.train_inputs, dtype=DTYPE)
        Xs = torch.as_tensor(X_star, dtype=DTYPE)
        cache = state.factorization()
        L = torch.as_tensor(cache["L"], dtype=DTYPE)
        beta = torch.as_tensor(cache["beta"], dtype=DTYPE)
        k_star = se_gram(params["log_ls"], params["log_sv"], X_t, Xs)
        mean = state.mean.constant + k_star.T @ beta
        U = torch.linalg.solve_triangular(L, k_star, upper=False)
        var = (torch.exp(params["log_sv"]) - (U * U).sum(dim=0)).clamp(min=0.0)
    return PredictiveMoments(mean.numpy(), var.numpy())


def kl_full(state: FullGPState) -> float:
    """KL divergence of the posterior from the prior over the latent values."""
    params = state._torch_params()
    with torch.no_grad():
        core = _core(params, state.train_inputs, state.train_targets, state.mean.constant)
        val = _kl_value(core, params["log_nv"])
    return max(float(val), 0.0)


def nll_full(state: FullGPState) -> float:
    """Negative log marginal likelihood (the classical training objective)."""
    params = state._torch_params()
    with torch.no_grad():
        core = _core(params, state.train_inputs, state.train_targets, state.mean.constant)
        val = _nll_value(core)
    return float(val)


def full_objective_grad(
    state: FullGPState,
    objective: str,
    bound_cfg: Optional[BoundConfig] = None,
    loss: Optional[LossSpec] = None,
) -> np.ndarray:
    """Gradient of the chosen objective w.r.t. [log_lengthscales..., log_sv, log_nv].

    The certificate objectives chain the analytic klinv partials with the
    gradients of the Gibbs risk and of the KL term; the hyperparameter-grid
    penalty is constant and contributes nothing.
    """
    if loss is None and bound_cfg is not None:
        loss = bound_cfg.loss
    params = state._torch_params(requires_grad=True)
    obj, _ = _objective_torch(
        params, state.train_inputs, state.train_targets, state.mean.constant,
        objective, bound_cfg, loss,
    )
    obj.backward()
    return np.concatenate([
        params["log_ls"].grad.numpy().ravel(),
        [float(params["log_sv"].grad)],
        [float(params["log_nv"].grad)],
    ])


def objective_value(
    state: FullGPState,
    objective: str,
    bound_cfg: Optional[BoundConfig] = None,
    loss: Optional[LossSpec] = None,
) -> float:
    """Scalar objective at the state's parameters (no gradient)."""
    if loss is None and bound_cfg is not None:
        loss = bound_cfg.loss
    with torch.no_grad():
        obj, _ = _objective_torch(
            state._torch_params(), state.train_inputs, state.train_targets,
            state.mean.constant, objective, bound_cfg, loss,
        )
    return float(obj)
