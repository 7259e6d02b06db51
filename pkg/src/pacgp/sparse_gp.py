"""Inducing-point GPs: posterior family, KL, FITC/VFE/DTC objectives.

The posterior is determined by a Gaussian over the function values at M
inducing inputs Z, extended by the prior conditional.  Two modes:

* parametrized: the inducing-value Gaussian is prescribed from the training
  data through the alpha-interpolated family (alpha = 1 is the FITC
  construction, alpha = 0 the VFE/DTC one),

      a_M  = m_M + K_MM Q_MM^{-1} K_MN D^{-1} (y - m_N)
      B_MM = K_MM Q_MM^{-1} K_MM,      Q_MM = K_MM + K_MN D^{-1} K_NM,
      D    = alpha * Lambda + sigma_n^2 I,
      Lambda_ii = K(x_i, x_i) - k_M(x_i) K_MM^{-1} k_M(x_i)',

* free_form: a_M and a Cholesky factor of B_MM are free parameters.

All formulas are evaluated through the whitened M x M system
P = I + V D^{-1} V' with V = L_K^{-1} K_MN, so no N x N matrix is formed and
the peak memory stays O(NM + M^2):

    KL(Q || P)  = 1/2 [ ln det P + tr(P^{-1}) - M + || P^{-1} b ||^2 ],
    mean(x)     = m + v(x)' h,     h = P^{-1} b,   b = L_K^{-1} K_MN D^{-1} (y - m_N)
    var(x)      = K(x,x) - ||v(x)||^2 + ||L_P^{-1} v(x)||^2,  v(x) = L_K^{-1} k_M(x).
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional, Union

import numpy as np
import torch

from .binary_kl import klinv_torch
from .bound import BoundConfig, penalty_constant
from .full_gp import LOG_2PI, _noise_barrier
from .kernels import DTYPE, HyperParams, MeanFunction, jittered_cholesky, se_gram
from .losses import LossSpec, PredictiveMoments, gibbs_risk_torch

__all__ = [
    "ParametrizedMode",
    "FreeFormMode",
    "SparseGPState",
    "inducing_posterior_params",
    "sparse_predict",
    "kl_sparse",
    "sparse_nll",
    "sparse_objective_grad",
    "SPARSE_OBJECTIVES",
    "SPARSE_NLL_VARIANTS",
]

SPARSE_OBJECTIVES = ("pac_kl", "pac_sqrt", "fitc", "vfe", "dtc")
SPARSE_NLL_VARIANTS = ("fitc", "vfe", "dtc")

# Baseline Schur-complement fault bar (relative to the prior variance); the
# effective bar additionally scales with the realized factor conditioning.
_LAMBDA_FAULT = 1e-10


@dataclasses.dataclass
class ParametrizedMode:
    """Posterior prescribed from the data via the alpha-interpolated family."""

    alpha: float = 1.0

    def __post_init__(self) -> None:
        self.alpha = float(self.alpha)
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")


@dataclasses.dataclass
class FreeFormMode:
    """Free posterior over inducing values: mean a_m, covariance chol_b chol_b'."""

    a_m: np.ndarray
    chol_b: np.ndarray

    def __post_init__(self) -> None:
        self.a_m = np.asarray(self.a_m, dtype=float).ravel()
        self.chol_b = np.tril(np.asarray(self.chol_b, dtype=float))
        m = self.a_m.size
        if self.chol_b.shape != (m, m):
            raise ValueError("chol_b must be M x M with M = len(a_m)")


@dataclasses.dataclass
class SparseGPState:
    """A (possibly trained) inducing-point GP regressor."""

    hyper: HyperParams
    mean: MeanFunction
    log_noise_variance: Optional[float]
    inducing_inputs: np.ndarray
    mode: Union[ParametrizedMode, FreeFormMode]
    train_inputs: Optional[np.ndarray] = None
    train_targets: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.inducing_inputs = np.atleast_2d(np.asarray(self.inducing_inputs, dtype=float))
        if isinstance(self.mode, ParametrizedMode):
            if self.log_noise_variance is None:
                raise ValueError("parametrized mode requires a noise variance")
            if self.train_inputs is None or self.train_targets is None:
                raise ValueError("parametrized mode requires training data")
        if self.train_inputs is not None:
            self.train_inputs = np.atleast_2d(np.asarray(self.train_inputs, dtype=float))
            self.train_targets = np.asarray(self.train_targets, dtype=float).ravel()
            if self.train_inputs.shape[0] != self.train_targets.size:
                raise ValueError("inputs and targets disagree on N")
            if self.train_inputs.shape[1] != self.inducing_inputs.shape[1]:
                raise ValueError("training and inducing inputs disagree on d")
        if self.log_noise_variance is not None:
            self.log_noise_variance = float(self.log_noise_variance)
        if isinstance(self.mode, FreeFormMode):
            if self.mode.a_m.size != self.inducing_inputs.shape[0]:
                raise ValueError("free-form parameters disagree with M")
        self._cache: Optional[dict] = None

    @property
    def n_inducing(self) -> int:
        return self.inducing_inputs.shape[0]

    def noise_variance(self) -> Optional[float]:
        if self.log_noise_variance is None:
            return None
        return float(np.exp(self.log_noise_variance))

    # -- flat parameter layout -------------------------------------------
    # parametrized: [log_ls..., log_sv, log_nv, Z.ravel(), (alpha)]
    # free_form:    [log_ls..., log_sv, Z.ravel(), a_m..., tril(chol_b)...]

    def flat_params(self, include_alpha: bool = False) -> np.ndarray:
        pieces = [self.hyper.as_vector()]
        if isinstance(self.mode, ParametrizedMode):
            pieces.append([self.log_noise_variance])
            pieces.append(self.inducing_inputs.ravel())
            if include_alpha:
                pieces.append([self.mode.alpha])
        else:
            pieces.append(self.inducing_inputs.ravel())
            pieces.append(self.mode.a_m)
            m = self.n_inducing
            pieces.append(self.mode.chol_b[np.tril_indices(m)])
        return np.concatenate([np.asarray(p, dtype=float) for p in pieces])

    def with_flat_params(self, vec: np.ndarray, include_alpha: bool = False) -> "SparseGPState":
        vec = np.asarray(vec, dtype=float)
        t = self.hyper.n_components
        m, d = self.inducing_inputs.shape
        hyper = HyperParams.from_vector(vec[:t], ard=self.hyper.ard)
        i = t
        if isinstance(self.mode, ParametrizedMode):
            log_nv = float(vec[i]); i += 1
            Z = vec[i:i + m * d].reshape(m, d); i += m * d
            alpha = self.mode.alpha
            if include_alpha:
                alpha = float(np.clip(vec[i], 0.0, 1.0)); i += 1
            mode: Union[ParametrizedMode, FreeFormMode] = ParametrizedMode(alpha)
        else:
            log_nv = self.log_noise_variance
            Z = vec[i:i + m * d].reshape(m, d); i += m * d
            a_m = vec[i:i + m]; i += m
            chol = np.zeros((m, m))
            chol[np.tril_indices(m)] = vec[i:i + m * (m + 1) // 2]
            mode = FreeFormMode(a_m, chol)
        return SparseGPState(
            hyper, self.mean, log_nv, Z, mode, self.train_inputs, self.train_targets
        )

    def _torch_params(self, requires_grad: bool = False) -> dict[str, torch.Tensor]:
        params = {
            "log_ls": torch.tensor(self.hyper.log_lengthscales, dtype=DTYPE,
                                   requires_grad=requires_grad),
            "log_sv": torch.tensor(self.hyper.log_signal_variance, dtype=DTYPE,
                                   requires_grad=requires_grad),
            "Z": torch.tensor(self.inducing_inputs, dtype=DTYPE,
                              requires_grad=requires_grad),
        }
        if isinstance(self.mode, ParametrizedMode):
            params["log_nv"] = torch.tensor(self.log_noise_variance, dtype=DTYPE,
                                            requires_grad=requires_grad)
            params["alpha"] = torch.tensor(self.mode.alpha, dtype=DTYPE)
        else:
            params["a_m"] = torch.tensor(self.mode.a_m, dtype=DTYPE,
                                         requires_grad=requires_grad)
            params["chol_b"] = torch.tensor(self.mode.chol_b, dtype=DTYPE,
                                            requires_grad=requires_grad)
        return params

    def _with_torch_params(self, params: dict[str, torch.Tensor]) -> "SparseGPState":
        hyper = HyperParams(
            params["log_ls"].detach().numpy().copy(),
            float(params["log_sv"].detach()),
            ard=self.hyper.ard,
        )
        Z = params["Z"].detach().numpy().copy()
        if isinstance(self.mode, ParametrizedMode):
            alpha = float(params["alpha"].detach()) if "alpha" in params else self.mode.alpha
            mode: Union[ParametrizedMode, FreeFormMode] = ParametrizedMode(
                float(np.clip(alpha, 0.0, 1.0)))
            log_nv = float(params["log_nv"].detach())
        else:
            mode = FreeFormMode(params["a_m"].detach().numpy().copy(),
                                params["chol_b"].detach().numpy().copy())
            log_nv = self.log_noise_variance
        return SparseGPState(hyper, self.mean, log_nv, Z, mode,
                             self.train_inputs, self.train_targets)


def _kernel_blocks(params: dict, X: Optional[np.ndarray]):
    """L_K (with jitter), and V = L_K^{-1} K_MN, Lambda for training inputs."""
    Z = params["Z"]
    K_mm = se_gram(params["log_ls"], params["log_sv"], Z, Z)
    sv = float(torch.exp(params["log_sv"]).detach())
    L_k, _ = jittered_cholesky(K_mm, sv)
    out = {"L_k": L_k}
    if X is not None:
        X_t = torch.as_tensor(X, dtype=DTYPE)
        K_mn = se_gram(params["log_ls"], params["log_sv"], Z, X_t)
        V = torch.linalg.solve_triangular(L_k, K_mn, upper=False)
        lam_raw = torch.exp(params["log_sv"]) - (V * V).sum(dim=0)
        lam_min = float(lam_raw.detach().min())
        # The whitened-solve rounding scales like cond(K_MM) * eps * sv;
        # near-coincident inducing points legitimately push the conditioning
        # to the jitter floor, so the fault bar adapts to the realized
        # conditioning (diagonal-ratio proxy) and milder negatives clamp.
        with torch.no_grad():
            diag = L_k.diagonal()
            cond_proxy = float((diag.max() / diag.min()) ** 2)
        tol = sv * max(_LAMBDA_FAULT, 1e4 * torch.finfo(DTYPE).eps * cond_proxy)
        if lam_min < -tol:
            raise RuntimeError(
                f"Schur complement entry {lam_min:.3e} below -{tol:.3e}: "
                "inconsistent kernel blocks"
            )
        out.update(V=V, lam=lam_raw.clamp(min=0.0))
    return out


def _parametrized_core(params: dict, X: np.ndarray, y: np.ndarray,
                       mean_const: float) -> dict:
    """Whitened posterior system for the parametrized mode."""
    blocks = _kernel_blocks(params, X)
    L_k, V, lam = blocks["L_k"], blocks["V"], blocks["lam"]
    m = L_k.shape[0]
    noise = torch.exp(params["log_nv"])
    d_vec = params["alpha"] * lam + noise
    y_t = torch.as_tensor(y, dtype=DTYPE)
    r = y_t - mean_const
    Vd = V / torch.sqrt(d_vec)[None, :]
    P = torch.eye(m, dtype=DTYPE) + Vd @ Vd.T
    L_p = torch.linalg.cholesky(P)
    b = Vd @ (r / torch.sqrt(d_vec))
    h = torch.cholesky_solve(b[:, None], L_p)[:, 0]
    return {"L_k": L_k, "V": V, "lam": lam, "L_p": L_p, "b": b, "h": h}


def _parametrized_kl(core: dict) -> torch.Tensor:
    L_p, b, h = core["L_p"], core["b"], core["h"]
    m = L_p.shape[0]
    logdet_p = 2.0 * torch.log(L_p.diagonal()).sum()
    Lp_inv = torch.linalg.solve_triangular(L_p, torch.eye(m, dtype=DTYPE), upper=False)
    tr_p_inv = (Lp_inv * Lp_inv).sum()
    return 0.5 * (logdet_p + tr_p_inv - m + h @ h)


def _parametrized_train_moments(core: dict, mean_const: float):
    V, lam, L_p, h = core["V"], core["lam"], core["L_p"], core["h"]
    mhat = mean_const + V.T @ h
    W = torch.linalg.solve_triangular(L_p, V, upper=False)
    var = lam + (W * W).sum(dim=0)
    return mhat, var


def _freeform_kl(params: dict, L_k: torch.Tensor, mean_const: float) -> torch.Tensor:
    chol_b = torch.tril(params["chol_b"])
    diag = chol_b.diagonal()
    if float(diag.abs().min().detach()) == 0.0:
        return torch.tensor(math.inf, dtype=DTYPE)
    delta = params["a_m"] - mean_const
    m = L_k.shape[0]
    half_logdet_k = torch.log(L_k.diagonal()).sum()
    half_logdet_b = torch.log(diag.abs()).sum()
    C = torch.linalg.solve_triangular(L_k, chol_b, upper=False)
    w = torch.linalg.solve_triangular(L_k, delta[:, None], upper=False)[:, 0]
    return (half_logdet_k - half_logdet_b) + 0.5 * ((C * C).sum() - m + w @ w)


def _freeform_moments(params: dict, L_k: torch.Tensor, V: torch.Tensor,
                      k_diag: torch.Tensor, mean_const: float):
    chol_b = torch.tril(params["chol_b"])
    delta = params["a_m"] - mean_const
    w = torch.linalg.solve_triangular(L_k, delta[:, None], upper=False)[:, 0]
    mean = mean_const + V.T @ w
    T = torch.linalg.solve_triangular(L_k.T, V, upper=True)  # K_MM^{-1}-whitened
    CB = chol_b.T @ T
    var = (k_diag - (V * V).sum(dim=0) + (CB * CB).sum(dim=0)).clamp(min=0.0)
    return mean, var


def inducing_posterior_params(state: SparseGPState, data=None) -> tuple[np.ndarray, np.ndarray]:
    """The inducing-value posterior (a_M, B_MM) of a parametrized-mode state.

    With data (X, y) defaulting to the state's stored training set.  For a
    free-form state the stored parameters are returned as-is.
    """
    if isinstance(state.mode, FreeFormMode):
        return state.mode.a_m.copy(), state.mode.chol_b @ state.mode.chol_b.T
    X, y = _resolve_data(state, data)
    params = state._torch_params()
    with torch.no_grad():
        core = _parametrized_core(params, X, y, state.mean.constant)
        a_m = state.mean.constant + core["L_k"] @ core["h"]
        Lp_inv_Lk = torch.linalg.solve_triangular(core["L_p"], core["L_k"].T, upper=False)
        b_mm = Lp_inv_Lk.T @ Lp_inv_Lk  # L_K P^{-1} L_K'
    return a_m.numpy(), b_mm.numpy()


def _resolve_data(state: SparseGPState, data) -> tuple[np.ndarray, np.ndarray]:
    if data is not None:
        if hasattr(data, "X") and hasattr(data, "y"):
            return np.asarray(data.X, dtype=float), np.asarray(data.y, dtype=float)
        X, y = data
        return np.asarray(X, dtype=float), np.asarray(y, dtype=float)
    if state.train_inputs is None:
        raise ValueError("no training data stored on the state and none supplied")
    return state.train_inputs, state.train_targets


def sparse_predict(state: SparseGPState, X_star) -> PredictiveMoments:
    """Posterior predictive moments at new inputs (noise-free variance)."""
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    if X_star.shape[1] != state.inducing_inputs.shape[1]:
        raise ValueError("test inputs have wrong dimension")
    params = state._torch_params()
    with torch.no_grad():
        blocks = _kernel_blocks(params, None)
        L_k = blocks["L_k"]
        Xs = torch.as_tensor(X_star, dtype=DTYPE)
        k_star = se_gram(params["log_ls"], params["log_sv"], params["Z"], Xs)
        v_star = torch.linalg.solve_triangular(L_k, k_star, upper=False)
        k_diag = torch.exp(params["log_sv"]) * torch.ones(Xs.shape[0], dtype=DTYPE)
        if isinstance(state.mode, ParametrizedMode):
            X, y = _resolve_data(state, None)
            core = _parametrized_core(params, X, y, state.mean.constant)
            mean = state.mean.constant + v_star.T @ core["h"]
            W = torch.linalg.solve_triangular(core["L_p"], v_star, upper=False)
            var = k_diag - (v_star * v_star).sum(dim=0) + (W * W).sum(dim=0)
        else:
            mean, var = _freeform_moments(params, L_k, v_star, k_diag, state.mean.constant)
    var_np = var.numpy()
    if var_np.min() < _LAMBDA_FAULT:
        import warnings

        warnings.warn(
            f"predictive variance fell to {var_np.min():.3e}; clamping to 0",
            RuntimeWarning,
        )
    return PredictiveMoments(mean.numpy(), np.clip(var_np, 0.0, None))


def kl_sparse(state: SparseGPState) -> float:
    """KL divergence of the inducing-value posterior from the prior.

    Depends only on M-dimensional quantities; +inf when a free-form
    covariance factor is singular.
    """
    params = state._torch_params()
    with torch.no_grad():
        if isinstance(state.mode, ParametrizedMode):
            X, y = _resolve_data(state, None)
            core = _parametrized_core(params, X, y, state.mean.constant)
            val = _parametrized_kl(core)
        else:
            blocks = _kernel_blocks(params, None)
            val = _freeform_kl(params, blocks["L_k"], state.mean.constant)
    return max(float(val), 0.0) if math.isfinite(float(val)) else math.inf


def _nll_terms(params: dict, X: np.ndarray, y: np.ndarray, mean_const: float,
               variant: str) -> torch.Tensor:
    """Collapsed-likelihood objective of the classical sparse methods.

    Shared form: 1/2 ln det[K_NM K_MM^{-1} K_MN + sigma_n^2 I + G]
    + N/2 ln 2pi + tr(T)/(2 sigma_n^2) + 1/2 r'(...)^{-1} r, where G is the
    Schur diagonal for FITC (else 0) and T is the Schur diagonal for VFE
    (else 0).  Evaluated via the matrix-determinant lemma and the Woodbury
    identity in O(N M^2).
    """
    if variant not in SPARSE_NLL_VARIANTS:
        raise ValueError(f"unknown sparse objective variant {variant!r}")
    blocks = _kernel_blocks(params, X)
    V, lam = blocks["V"], blocks["lam"]
    m = V.shape[0]
    n = V.shape[1]
    noise = torch.exp(params["log_nv"])
    d_vec = noise + lam if variant == "fitc" else noise * torch.ones(n, dtype=DTYPE)
    y_t = torch.as_tensor(y, dtype=DTYPE)
    r = y_t - mean_const
    Vg = V / torch.sqrt(d_vec)[None, :]
    Pg = torch.eye(m, dtype=DTYPE) + Vg @ Vg.T
    L_pg = torch.linalg.cholesky(Pg)
    logdet = torch.log(d_vec).sum() + 2.0 * torch.log(L_pg.diagonal()).sum()
    rd = r / torch.sqrt(d_vec)
    s = Vg @ rd
    quad = rd @ rd - (torch.linalg.solve_triangular(L_pg, s[:, None], upper=False) ** 2).sum()
    obj = 0.5 * logdet + 0.5 * n * LOG_2PI + 0.5 * quad
    if variant == "vfe":
        obj = obj + 0.5 * lam.sum() / noise
    return obj


def sparse_nll(state: SparseGPState, data=None, variant: str = "fitc") -> float:
    """Classical sparse training objective (negative collapsed log likelihood)."""
    if not isinstance(state.mode, ParametrizedMode):
        raise ValueError("sparse_nll applies to parametrized-mode states")
    X, y = _resolve_data(state, data)
    with torch.no_grad():
        val = _nll_terms(state._torch_params(), X, y, state.mean.constant, variant)
    return float(val)


def _objective_torch(
    params: dict,
    mode_is_parametrized: bool,
    X: np.ndarray,
    y: np.ndarray,
    mean_const: float,
    objective: str,
    bound_cfg: Optional[BoundConfig],
    loss: Optional[LossSpec],
    batch: Optional[np.ndarray] = None,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Scalar sparse training objective plus trace diagnostics."""
    if objective not in SPARSE_OBJECTIVES:
        raise ValueError(f"unknown sparse objective {objective!r}")
    aux: dict[str, float] = {}
    if objective in SPARSE_NLL_VARIANTS:
        if not mode_is_parametrized:
            raise ValueError("baseline objectives require the parametrized mode")
        obj = _nll_terms(params, X, y, mean_const, objective)
        aux["nll"] = float(obj.detach())
        return obj + _noise_barrier(params["log_nv"]), aux
    if bound_cfg is None or loss is None:
        raise ValueError("certificate objectives need bound_cfg and loss")
    n = y.shape[0]
    if mode_is_parametrized:
        core = _parametrized_core(params, X, y, mean_const)
        kl = _parametrized_kl(core)
        mhat, var = _parametrized_train_moments(core, mean_const)
    else:
        blocks = _kernel_blocks(params, X)
        kl = _freeform_kl(params, blocks["L_k"], mean_const)
        k_diag = torch.exp(params["log_sv"]) * torch.ones(n, dtype=DTYPE)
        mhat, var = _freeform_moments(params, blocks["L_k"], blocks["V"], k_diag,
                                      mean_const)
    if batch is not None:
        q = gibbs_risk_torch(loss, y[batch], mhat[batch], var[batch])
    else:
        q = gibbs_risk_torch(loss, y, mhat, var)
    t = len(params["log_ls"]) + 1
    eps = (kl + penalty_constant(n, t, bound_cfg)) / n
    if objective == "pac_kl":
        obj = klinv_torch(q, eps)
    else:
        obj = q + torch.sqrt(eps / 2.0)
    aux["gibbs_train"] = float(q.detach())
    aux["kl_over_n"] = float(kl.detach()) / n
    if "log_nv" in params:
        obj = obj + _noise_barrier(params["log_nv"])
    return obj, aux


def sparse_objective_grad(
    state: SparseGPState,
    objective: str,
    bound_cfg: Optional[BoundConfig] = None,
    data=None,
    loss: Optional[LossSpec] = None,
    include_alpha: bool = False,
) -> np.ndarray:
    """Gradient of the chosen objective w.r.t. the state's flat parameters.

    Layout follows SparseGPState.flat_params: kernel log hyperparameters,
    then ln sigma_n^2 (parametrized mode), the inducing inputs (which carry
    gradients but no cardinality penalty), optionally alpha, and for the
    free-form mode the posterior parameters instead of the noise.
    """
    if loss is None and bound_cfg is not None:
        loss = bound_cfg.loss
    X, y = _resolve_data(state, data)
    params = state._torch_params(requires_grad=True)
    if include_alpha:
        if not isinstance(state.mode, ParametrizedMode):
            raise ValueError("alpha gradient only exists in parametrized mode")
        params["alpha"] = params["alpha"].clone().requires_grad_(True)
    obj, _ = _objective_torch(
        params, isinstance(state.mode, ParametrizedMode), X, y,
        state.mean.constant, objective, bound_cfg, loss,
    )
    obj.backward()

    def grad_of(key: str) -> np.ndarray:
        g = params[key].grad
        if g is None:
            return np.zeros(params[key].numel())
        return g.detach().numpy().ravel().copy()

    pieces = [grad_of("log_ls"), grad_of("log_sv")]
    if isinstance(state.mode, ParametrizedMode):
        pieces += [grad_of("log_nv"), grad_of("Z")]
        if include_alpha:
            pieces.append(grad_of("alpha"))
    else:
        chol_grad = params["chol_b"].grad
        m = state.n_inducing
        tril = (np.zeros((m, m)) if chol_grad is None
                else np.tril(chol_grad.detach().numpy()))
        pieces += [grad_of("Z"), grad_of("a_m"), tril[np.tril_indices(m)]]
    return np.concatenate(pieces)


def objective_value(
    state: SparseGPState,
    objective: str,
    bound_cfg: Optional[BoundConfig] = None,
    data=None,
    loss: Optional[LossSpec] = None,
) -> float:
    """Scalar objective at the state's parameters (no gradient)."""
    if loss is None and bound_cfg is not None:
        loss = bound_cfg.loss
    X, y = _resolve_data(state, data)
    with torch.no_grad():
        obj, _ = _objective_torch(
            state._torch_params(), isinstance(state.mode, ParametrizedMode),
            X, y, state.mean.constant, objective, bound_cfg, loss,
        )
    return float(obj)
