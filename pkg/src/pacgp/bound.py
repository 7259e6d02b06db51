"""Risk-certificate assembly: grid discretization, penalty terms, and bounds.

The certificate holds simultaneously over a finite hyperparameter grid: each
log hyperparameter is snapped onto the equispaced (G+1)-point grid over
[-L, L] with G = 2L * 10^r, contributing a T*ln(G+1) cardinality penalty for
T discretized components.  Together with the confidence term ln(2 sqrt(N) /
delta) and the posterior's KL divergence, the certified bound is

    B = klinv(gibbs_train, (KL + T ln(G+1) + ln(2 sqrt(N)/delta)) / N)

with the looser additive Pinsker variant B_Pin = gibbs_train + sqrt(.../2N).
Only the kernel hyperparameters are discretized; observation noise, inducing
inputs, and free-form posterior parameters carry no cardinality penalty.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional

import numpy as np

from .binary_kl import klinv
from .kernels import HyperParams
from .losses import LossSpec, gibbs_risk

__all__ = [
    "BoundConfig",
    "PenaltyTerms",
    "BoundReport",
    "CertificateError",
    "discretize_hyperparams",
    "is_on_grid",
    "penalty",
    "penalty_constant",
    "pac_bound",
    "pinsker_bound",
    "bayes_bound",
    "build_report",
    "REPORT_SCHEMA",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1

_GRID_TOL = 1e-9


class CertificateError(ValueError):
    """Raised when a certificate is requested for an uncertifiable model."""


@dataclasses.dataclass
class BoundConfig:
    """Certificate configuration fixed before seeing the training data.

    delta is the confidence parameter; the grid spans [-L, L] in each log
    hyperparameter with 10^-grid_digits spacing.  n_epsilon_candidates > 1
    adds the ln(E) surcharge for selecting the loss scale from a pre-declared
    set of E values.
    """

    loss: LossSpec
    delta: float = 0.01
    grid_half_width: float = 6.0
    grid_digits: int = 2
    n_epsilon_candidates: int = 1

    def __post_init__(self) -> None:
        if not (0.0 < self.delta <= 1.0):
            raise ValueError("delta must lie in (0, 1]")
        if self.grid_half_width <= 0.0:
            raise ValueError("grid_half_width must be positive")
        if self.grid_digits < 0:
            raise ValueError("grid_digits must be nonnegative")
        if self.n_epsilon_candidates < 1:
            raise ValueError("n_epsilon_candidates must be at least 1")

    @property
    def grid_size(self) -> int:
        """G: number of grid intervals, 2L * 10^r."""
        return int(round(2.0 * self.grid_half_width * 10.0**self.grid_digits))

    def ln_theta_card(self, n_components: int) -> float:
        """ln |Theta| = T ln(G+1) for T discretized components."""
        return n_components * math.log(self.grid_size + 1)


@dataclasses.dataclass
class PenaltyTerms:
    """The additive penalty entering the certificate's divergence budget."""

    ln_theta_card: float
    ln_conf: float
    total_over_n: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def discretize_hyperparams(
    hyper: HyperParams, cfg: BoundConfig
) -> tuple[HyperParams, float]:
    """Snap each log hyperparameter to the certificate grid.

    Components are clamped into [-L, L] and rounded to the nearest grid
    point; the observation noise and any inducing-point or free-form
    parameters are untouched.  Returns the discretized parameters and
    ln |Theta|.
    """
    half = cfg.grid_half_width
    step = 2.0 * half / cfg.grid_size
    vec = hyper.as_vector()
    snapped = -half + np.round((np.clip(vec, -half, half) + half) / step) * step
    out = HyperParams.from_vector(snapped, ard=hyper.ard)
    return out, cfg.ln_theta_card(hyper.n_components)


def is_on_grid(hyper: HyperParams, cfg: BoundConfig) -> bool:
    """Whether every log hyperparameter already lies on the certificate grid."""
    half = cfg.grid_half_width
    step = 2.0 * half / cfg.grid_size
    vec = hyper.as_vector()
    if np.any(np.abs(vec) > half + _GRID_TOL):
        return False
    k = (vec + half) / step
    return bool(np.all(np.abs(k - np.round(k)) * step <= _GRID_TOL))


def penalty(n: int, t: int, kl: float, cfg: BoundConfig) -> PenaltyTerms:
    """Penalty terms for n training points, t discretized components, and KL."""
    if n < 1:
        raise ValueError("n must be at least 1")
    ln_theta = cfg.ln_theta_card(t)
    ln_conf = math.log(2.0 * math.sqrt(n) / cfg.delta)
    if cfg.n_epsilon_candidates > 1:
        ln_conf += math.log(cfg.n_epsilon_candidates)
    return PenaltyTerms(ln_theta, ln_conf, (kl + ln_theta + ln_conf) / n)


def penalty_constant(n: int, t: int, cfg: BoundConfig) -> float:
    """KL-independent part of the divergence budget: ln|Theta| + ln(2 sqrt(n)/delta)."""
    return penalty(n, t, 0.0, cfg).total_over_n * n


def pac_bound(gibbs_train: float, kl: float, pen: PenaltyTerms, n: int) -> float:
    """Certified upper bound on the true Gibbs risk (the klinv certificate)."""
    if kl < 0.0:
        raise ValueError("kl must be nonnegative")
    eps = (kl + pen.ln_theta_card + pen.ln_conf) / n
    return klinv(gibbs_train, eps)


def pinsker_bound(gibbs_train: float, kl: float, pen: PenaltyTerms, n: int) -> float:
    """Additive square-root relaxation of the certificate; may exceed 1."""
    if kl < 0.0:
        raise ValueError("kl must be nonnegative")
    eps = (kl + pen.ln_theta_card + pen.ln_conf) / n
    return gibbs_train + math.sqrt(eps / 2.0)


def bayes_bound(b: float) -> float:
    """Bound on the risk of the predictive-mean predictor: min(1, 2B).

    Valid for losses quasi-convex in the prediction and a predictive law
    symmetric about its mean, both of which hold here.
    """
    if not (0.0 <= b <= 1.0):
        raise ValueError("b must lie in [0, 1]")
    return min(1.0, 2.0 * b)


@dataclasses.dataclass
class BoundReport:
    """One certified evaluation row: bounds, risks, and model properties."""

    b: float
    b_pinsker: float
    gibbs_train: float
    gibbs_test: float
    mse_test: float
    kl: float
    kl_over_n: float
    sigma_n_sq: Optional[float]
    bayes_bound: float
    penalty: PenaltyTerms
    metadata: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "b": self.b,
            "b_pinsker": self.b_pinsker,
            "gibbs_train": self.gibbs_train,
            "gibbs_test": self.gibbs_test,
            "mse_test": self.mse_test,
            "kl": self.kl,
            "kl_over_n": self.kl_over_n,
            "sigma_n_sq": self.sigma_n_sq,
            "bayes_bound": self.bayes_bound,
            "penalty": self.penalty.to_dict(),
            "metadata": self.metadata,
        }


REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": [
        "schema_version", "b", "b_pinsker", "gibbs_train", "gibbs_test",
        "mse_test", "kl", "kl_over_n", "sigma_n_sq", "bayes_bound",
        "penalty", "metadata",
    ],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "b": {"type": "number", "minimum": 0, "maximum": 1},
        "b_pinsker": {"type": "number", "minimum": 0},
        "gibbs_train": {"type": "number", "minimum": 0, "maximum": 1},
        "gibbs_test": {"type": "number", "minimum": 0, "maximum": 1},
        "mse_test": {"type": "number", "minimum": 0},
        "kl": {"type": "number", "minimum": 0},
        "kl_over_n": {"type": "number", "minimum": 0},
        "sigma_n_sq": {"type": ["number", "null"]},
        "bayes_bound": {"type": "number", "minimum": 0, "maximum": 1},
        "penalty": {
            "type": "object",
            "required": ["ln_theta_card", "ln_conf", "total_over_n"],
            "properties": {
                "ln_theta_card": {"type": "number", "minimum": 0},
                "ln_conf": {"type": "number"},
                "total_over_n": {"type": "number", "minimum": 0},
            },
        },
        "metadata": {"type": "object"},
    },
}


def _data_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(data, "X") and hasattr(data, "y"):
        return np.asarray(data.X, dtype=float), np.asarray(data.y, dtype=float)
    X, y = data
    return np.asarray(X, dtype=float), np.asarray(y, dtype=float)


def build_report(
    state,
    train_data,
    test_data,
    cfg: BoundConfig,
    metadata: Optional[dict] = None,
) -> BoundReport:
    """Evaluate the full certificate row for a trained, discretized model.

    Refuses to certify a model whose log hyperparameters are off the grid:
    the cardinality penalty is only valid for grid members, so discretize
    first.  All risks are recomputed from the rounded parameters.
    """
    from . import full_gp as _full
    from . import sparse_gp as _sparse

    if not is_on_grid(state.hyper, cfg):
        raise CertificateError(
            "model hyperparameters are not on the certificate grid; apply "
            "discretize_hyperparams before building a report"
        )
    X_tr, y_tr = _data_arrays(train_data)
    X_te, y_te = _data_arrays(test_data)
    n = y_tr.size

    if isinstance(state, _full.FullGPState):
        kl = _full.kl_full(state)
        mom_tr = _full.full_predict(state, X_tr)
        mom_te = _full.full_predict(state, X_te)
        sigma_n_sq: Optional[float] = state.noise_variance()
    elif isinstance(state, _sparse.SparseGPState):
        kl = _sparse.kl_sparse(state)
        mom_tr = _sparse.sparse_predict(state, X_tr)
        mom_te = _sparse.sparse_predict(state, X_te)
        sigma_n_sq = state.noise_variance()
    else:
        raise TypeError(f"cannot certify object of type {type(state).__name__}")
    if not math.isfinite(kl):
        raise CertificateError("KL divergence is infinite; the certificate is trivial")

    q_train = gibbs_risk(cfg.loss, y_tr, mom_tr)
    q_test = gibbs_risk(cfg.loss, y_te, mom_te)
    mse = float(np.mean((mom_te.mean - y_te) ** 2))
    pen = penalty(n, state.hyper.n_components, kl, cfg)
    b = pac_bound(q_train, kl, pen, n)
    b_pin = pinsker_bound(q_train, kl, pen, n)

    meta = dict(metadata or {})
    meta.setdefault("n_train", int(n))
    meta.setdefault("n_test", int(y_te.size))
    meta.setdefault("d", int(X_tr.shape[1]))
    meta.setdefault("ard", bool(state.hyper.ard))
    meta.setdefault("loss_kind", cfg.loss.kind)
    meta.setdefault("loss_epsilon", cfg.loss.epsilon)
    meta.setdefault("delta", cfg.delta)
    meta.setdefault("grid_half_width", cfg.grid_half_width)
    meta.setdefault("grid_digits", cfg.grid_digits)
    meta.setdefault("rounding", "nearest-grid-point")

    report = BoundReport(
        b=b,
        b_pinsker=b_pin,
        gibbs_train=q_train,
        gibbs_test=q_test,
        mse_test=mse,
        kl=kl,
        kl_over_n=kl / n,
        sigma_n_sq=sigma_n_sq,
        bayes_bound=bayes_bound(b),
        penalty=pen,
        metadata=meta,
    )
    if not (q_train <= report.b + 1e-12 and report.b <= report.b_pinsker + 1e-12):
        raise AssertionError("certificate ordering violated; numerical fault")
    return report
