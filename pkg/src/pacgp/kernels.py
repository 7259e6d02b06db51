"""Squared-exponential kernel (ARD and isotropic) with analytic log-space gradients.

All positive kernel hyperparameters are carried in log space: the stored
vector holds ln(lengthscale^2) per input dimension (or a single shared entry
for the isotropic kernel) and ln(signal variance).  Log space is the native
parameterization both for unconstrained optimization and for the grid
discretization applied by the certificate.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import torch

__all__ = [
    "HyperParams",
    "MeanFunction",
    "CholeskyError",
    "gram",
    "gram_grad",
    "se_gram",
    "se_diag",
    "jittered_cholesky",
]

DTYPE = torch.float64

# Jitter ladder for Cholesky factorizations of noise-free kernel matrices,
# relative to the signal variance.
JITTER_START = 1e-8
JITTER_MAX = 1e-2
JITTER_GROWTH = 10.0


class CholeskyError(RuntimeError):
    """Kernel matrix stayed indefinite through the whole jitter ladder."""


@dataclasses.dataclass
class HyperParams:
    """Kernel hyperparameters in log space.

    log_lengthscales holds ln(l_i^2): one entry per input dimension for the
    ARD kernel, a single shared entry otherwise.  log_signal_variance is
    ln(sigma_s^2).  These are exactly the components subject to grid
    discretization and the cardinality penalty; the observation noise is not
    among them.
    """

    log_lengthscales: np.ndarray
    log_signal_variance: float
    ard: bool = False

    def __post_init__(self) -> None:
        self.log_lengthscales = np.atleast_1d(
            np.asarray(self.log_lengthscales, dtype=float)
        ).copy()
        self.log_signal_variance = float(self.log_signal_variance)
        if not np.all(np.isfinite(self.log_lengthscales)):
            raise ValueError("log_lengthscales must be finite")
        if not np.isfinite(self.log_signal_variance):
            raise ValueError("log_signal_variance must be finite")
        if not self.ard and self.log_lengthscales.shape != (1,):
            raise ValueError("isotropic kernel takes exactly one lengthscale")

    @property
    def n_components(self) -> int:
        """Number of discretized components (lengthscales plus signal variance)."""
        return self.log_lengthscales.size + 1

    def as_vector(self) -> np.ndarray:
        """Flat component vector [ln l_1^2, ..., ln sigma_s^2]."""
        return np.append(self.log_lengthscales, self.log_signal_variance)

    @classmethod
    def from_vector(cls, vec: np.ndarray, ard: bool) -> "HyperParams":
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:-1], float(vec[-1]), ard=ard)

    def signal_variance(self) -> float:
        return float(np.exp(self.log_signal_variance))


@dataclasses.dataclass
class MeanFunction:
    """Constant prior mean (zero by default)."""

    constant: float = 0.0

    def __post_init__(self) -> None:
        self.constant = float(self.constant)
        if not np.isfinite(self.constant):
            raise ValueError("mean constant must be finite")


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(DTYPE)
    return torch.as_tensor(np.asarray(x, dtype=float), dtype=DTYPE)


def _check_inputs(A: torch.Tensor, B: torch.Tensor, n_ls: int) -> None:
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError("kernel inputs must be 2-d (n, d) matrices")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"input dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if n_ls not in (1, A.shape[1]):
        raise ValueError(
            f"{n_ls} lengthscales incompatible with {A.shape[1]}-dimensional inputs"
        )


def se_gram(
    log_lengthscales: torch.Tensor,
    log_signal_variance: torch.Tensor,
    A: torch.Tensor,
    B: torch.Tensor,
) -> torch.Tensor:
    """Differentiable squared-exponential Gram matrix between row sets A and B.

    Entry (i, j) = sigma_s^2 * exp(-0.5 * sum_k (A_ik - B_jk)^2 / l_k^2); a
    single lengthscale entry is broadcast over all input dimensions.
    """
    _check_inputs(A, B, log_lengthscales.numel())
    inv_ls = torch.exp(-0.5 * log_lengthscales)  # 1 / l_k
    As = A * inv_ls
    Bs = B * inv_ls
    sq = (
        (As * As).sum(dim=1, keepdim=True)
        - 2.0 * (As @ Bs.T)
        + (Bs * Bs).sum(dim=1)[None, :]
    )
    sq = sq.clamp(min=0.0)
    return torch.exp(log_signal_variance - 0.5 * sq)


def se_diag(
    log_signal_variance: torch.Tensor, n: int, like: torch.Tensor
) -> torch.Tensor:
    """Diagonal of the prior covariance at n points: constant sigma_s^2."""
    return torch.exp(log_signal_variance) * like.new_ones(n)


def gram(params: HyperParams, A, B) -> np.ndarray:
    """Gram matrix K(A, B) as a numpy array."""
    A_t, B_t = _as_tensor(A), _as_tensor(B)
    log_ls = _as_tensor(params.log_lengthscales)
    log_sv = torch.tensor(params.log_signal_variance, dtype=DTYPE)
    return se_gram(log_ls, log_sv, A_t, B_t).numpy()


def gram_grad(params: HyperParams, A, B) -> np.ndarray:
    """Stack of Gram-matrix gradients w.r.t. each log hyperparameter.

    Returns an array of shape (T, n, m) following the component order of
    HyperParams.as_vector().  For the squared-exponential kernel,

        dK/d ln(l_k^2)    = K * 0.5 * (A_k - B_k)^2 / l_k^2
        dK/d ln(sigma_s^2) = K

    and the isotropic gradient is the sum of the per-dimension terms.
    """
    A_np = np.asarray(A, dtype=float)
    B_np = np.asarray(B, dtype=float)
    K = gram(params, A_np, B_np)
    ls_sq = np.exp(params.log_lengthscales)
    out = np.empty((params.n_components,) + K.shape)
    if params.ard and params.log_lengthscales.size == A_np.shape[1]:
        for k in range(A_np.shape[1]):
            sq = (A_np[:, k][:, None] - B_np[None, :, k]) ** 2
            out[k] = K * (0.5 * sq / ls_sq[k])
    else:
        sq = (
            (A_np**2).sum(axis=1)[:, None]
            - 2.0 * A_np @ B_np.T
            + (B_np**2).sum(axis=1)[None, :]
        )
        out[0] = K * (0.5 * np.clip(sq, 0.0, None) / ls_sq[0])
    out[-1] = K
    return out


def jittered_cholesky(mat: torch.Tensor, scale: float) -> tuple[torch.Tensor, float]:
    """Cholesky factor of a symmetric PSD matrix with an escalating jitter.

    Tries jitter = 0, then JITTER_START*scale up to JITTER_MAX*scale in
    factors of JITTER_GROWTH; `scale` should be the prior signal variance.
    Returns (lower factor, jitter used).  The level is selected on a
    detached copy so the search does not enter the autograd graph; the
    final factorization does.
    """
    eye = torch.eye(mat.shape[0], dtype=mat.dtype)
    jitters = [0.0, JITTER_START * scale]
    while jitters[-1] < JITTER_MAX * scale * (1.0 - 1e-12):
        jitters.append(min(jitters[-1] * JITTER_GROWTH, JITTER_MAX * scale))
    chosen = None
    with torch.no_grad():
        for jit in jitters:
            _, info = torch.linalg.cholesky_ex(mat.detach() + jit * eye)
            if int(info) == 0:
                chosen = jit
                break
    if chosen is None:
        raise CholeskyError(
            f"matrix of size {mat.shape[0]} not positive definite even with "
            f"jitter {jitters[-1]:.3e} (ladder {JITTER_START:.0e}..{JITTER_MAX:.0e} "
            f"relative to scale {scale:.3e})"
        )
    L = torch.linalg.cholesky(mat + chosen * eye if chosen > 0.0 else mat)
    return L, chosen
