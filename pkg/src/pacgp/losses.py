"""Bounded regression losses and their closed-form Gaussian expectations.

Four loss families, all mapping into [0, 1]:

  zero_one        1 outside the band [y - eps, y + eps], else 0
  clipped_square  min(((y - yhat)/eps)^2, 1)
  inv_gauss       1 - exp(-((y - yhat)/eps)^2)
  band            1 outside [band_lo(y), band_hi(y)], else 0

For a Gaussian predictive distribution N(mhat, sdev^2) the expected loss
(the Gibbs risk contribution of one point) has a closed form per family,
expressed through the standard normal CDF; each form was validated against
adaptive quadrature of the defining integral.  Two printings of these forms
circulate with typos (a linear instead of squared variance term in the
inv_gauss exponent, and a garbled tail pairing for clipped_square); the
formulas below are the quadrature-validated ones.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional

import numpy as np
import torch
from scipy import special

__all__ = [
    "LOSS_KINDS",
    "LossSpec",
    "PredictiveMoments",
    "pointwise_loss",
    "gibbs_pointwise",
    "gibbs_pointwise_partials",
    "gibbs_risk",
    "gibbs_risk_grad",
    "minibatch_risk",
    "gibbs_risk_torch",
]

LOSS_KINDS = ("zero_one", "clipped_square", "inv_gauss", "band")

# Width floor for the relative band at y = 0, where y +/- eps*|y| degenerates.
_REL_BAND_FLOOR = 1e-12

_SQRT2 = math.sqrt(2.0)
_DEGENERATE_SD = 1e-15
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclasses.dataclass
class LossSpec:
    """A bounded loss: its family, accuracy scale, and (optionally) band edges.

    epsilon is the accuracy scale for the first three kinds.  The band kind
    takes explicit edge functions; when omitted they default to the relative
    band y +/- epsilon * max(|y|, 1e-12).
    """

    kind: str
    epsilon: float = 1.0
    band_lo: Optional[Callable[[np.ndarray], np.ndarray]] = None
    band_hi: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self) -> None:
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; choose from {LOSS_KINDS}")
        self.epsilon = float(self.epsilon)
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.kind == "band":
            if self.band_lo is None or self.band_hi is None:
                eps = self.epsilon
                self.band_lo = lambda y: y - eps * np.maximum(np.abs(y), _REL_BAND_FLOOR)
                self.band_hi = lambda y: y + eps * np.maximum(np.abs(y), _REL_BAND_FLOOR)

    def band_edges(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Interval [lo, hi] of zero loss around each target."""
        y = np.asarray(y, dtype=float)
        if self.kind == "band":
            lo = np.asarray(self.band_lo(y), dtype=float)
            hi = np.asarray(self.band_hi(y), dtype=float)
            if np.any(lo >= hi):
                raise ValueError("band_lo must lie strictly below band_hi")
            return lo, hi
        return y - self.epsilon, y + self.epsilon


@dataclasses.dataclass
class PredictiveMoments:
    """Predictive means and variances at a set of points."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.var = np.atleast_1d(np.asarray(self.var, dtype=float))
        if self.mean.shape != self.var.shape:
            raise ValueError("mean and var must have equal shapes")
        if np.any(self.var < 0.0):
            raise ValueError("variances must be nonnegative")

    @property
    def sdev(self) -> np.ndarray:
        return np.sqrt(self.var)

    def __len__(self) -> int:
        return self.mean.size


def _ncdf(z: np.ndarray) -> np.ndarray:
    return special.ndtr(z)


def _npdf(z: np.ndarray) -> np.ndarray:
    return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def pointwise_loss(spec: LossSpec, y: float, yhat: float) -> float:
    """Loss of a single prediction; in [0, 1] and zero at yhat = y."""
    y_arr = np.asarray(y, dtype=float)
    yhat_arr = np.asarray(yhat, dtype=float)
    if spec.kind == "clipped_square":
        val = np.minimum(((y_arr - yhat_arr) / spec.epsilon) ** 2, 1.0)
    elif spec.kind == "inv_gauss":
        val = -np.expm1(-(((y_arr - yhat_arr) / spec.epsilon) ** 2))
    else:
        lo, hi = spec.band_edges(y_arr)
        val = np.where((yhat_arr < lo) | (yhat_arr > hi), 1.0, 0.0)
    return float(val) if np.ndim(val) == 0 else val


def _gibbs_closed_form(spec, y, mhat, sd, *, xp, ncdf, npdf, exp):
    """Shared expression tree for the four closed forms.

    `xp` is the array namespace (numpy or torch); sd must be positive.
    """
    if spec.kind == "inv_gauss":
        eps2 = spec.epsilon**2
        c = y - mhat
        denom = 2.0 * sd * sd + eps2
        scale = (1.0 + 2.0 * sd * sd / eps2) ** -0.5
        return 1.0 - scale * exp(-(c * c) / denom)
    if spec.kind == "clipped_square":
        eps = spec.epsilon
        c = y - mhat
        a = (c - eps) / sd
        b = (c + eps) / sd
        u = 1.0 - (c * c + sd * sd) / eps**2
        w = (sd * sd) / eps**2
        return 1.0 + u * (ncdf(a) - ncdf(b)) - w * (b * npdf(a) - a * npdf(b))
    lo, hi = spec.band_edges(y if isinstance(y, np.ndarray) else np.asarray(y))
    if xp is torch:
        lo = torch.as_tensor(lo, dtype=mhat.dtype)
        hi = torch.as_tensor(hi, dtype=mhat.dtype)
    return ncdf((lo - mhat) / sd) + ncdf(-(hi - mhat) / sd)


def gibbs_pointwise(spec: LossSpec, y: float, mhat: float, sdev: float) -> float:
    """Expected loss under a Gaussian prediction N(mhat, sdev^2); in [0, 1].

    Reduces to the plain pointwise loss as sdev -> 0.
    """
    if sdev < 0.0:
        raise ValueError("sdev must be nonnegative")
    if sdev <= _DEGENERATE_SD * max(1.0, abs(y), abs(mhat), spec.epsilon):
        # z-scores beyond ~1e15 saturate the normal CDF; the closed form
        # equals the pointwise limit to full precision but would overflow
        return pointwise_loss(spec, y, mhat)
    val = _gibbs_closed_form(
        spec,
        np.asarray(y, float),
        np.asarray(mhat, float),
        np.asarray(sdev, float),
        xp=np,
        ncdf=_ncdf,
        npdf=_npdf,
        exp=np.exp,
    )
    return float(np.clip(val, 0.0, 1.0))


def _gibbs_vector(spec: LossSpec, y: np.ndarray, moments: PredictiveMoments) -> np.ndarray:
    mean, sd = moments.mean, moments.sdev
    out = np.empty_like(mean)
    pos = sd > _DEGENERATE_SD * np.maximum.reduce(
        [np.ones_like(sd), np.abs(y), np.abs(mean), np.full_like(sd, spec.epsilon)])
    if np.any(pos):
        out[pos] = np.clip(
            _gibbs_closed_form(
                spec, y[pos], mean[pos], sd[pos],
                xp=np, ncdf=_ncdf, npdf=_npdf, exp=np.exp,
            ),
            0.0,
            1.0,
        )
    if np.any(~pos):
        out[~pos] = pointwise_loss(spec, y[~pos], mean[~pos])
    return out


def gibbs_risk(spec: LossSpec, targets, moments: PredictiveMoments) -> float:
    """Average Gibbs loss over a dataset (the empirical risk of the GP)."""
    y = np.atleast_1d(np.asarray(targets, dtype=float))
    if y.shape != moments.mean.shape:
        raise ValueError(
            f"targets ({y.shape}) and moments ({moments.mean.shape}) length mismatch"
        )
    return float(np.mean(_gibbs_vector(spec, y, moments)))


def minibatch_risk(spec: LossSpec, targets, moments: PredictiveMoments, batch) -> float:
    """Average Gibbs loss over the index set `batch`; unbiased for uniform batches."""
    idx = np.asarray(batch, dtype=int)
    if idx.size == 0:
        raise ValueError("empty batch")
    y = np.atleast_1d(np.asarray(targets, dtype=float))
    if np.any(idx < 0) or np.any(idx >= y.size):
        raise IndexError("batch index out of range")
    sub = PredictiveMoments(moments.mean[idx], moments.var[idx])
    return gibbs_risk(spec, y[idx], sub)


def gibbs_pointwise_partials(
    spec: LossSpec, y: float, mhat: float, sdev: float
) -> tuple[float, float]:
    """Partials of the closed-form expected loss w.r.t. (mhat, sdev).

    Requires sdev > 0 (the expected loss is not differentiable in the
    degenerate limit for the band-type kinds).
    """
    if sdev <= 0.0:
        raise ValueError("partials require sdev > 0")
    y = float(y)
    m = float(mhat)
    sd = float(sdev)
    if spec.kind == "inv_gauss":
        eps2 = spec.epsilon**2
        c = y - m
        denom = 2.0 * sd * sd + eps2
        s = (1.0 + 2.0 * sd * sd / eps2) ** -0.5
        e = math.exp(-(c * c) / denom)
        d_m = -2.0 * s * e * c / denom
        d_sd = 2.0 * sd * s**3 * e / eps2 - 4.0 * sd * c * c * s * e / denom**2
        return d_m, d_sd
    if spec.kind == "clipped_square":
        eps = spec.epsilon
        eps2 = eps * eps
        c = y - m
        a = (c - eps) / sd
        b = (c + eps) / sd
        u = 1.0 - (c * c + sd * sd) / eps2
        w = (sd * sd) / eps2
        pa, pb = _npdf(a), _npdf(b)
        ca, cb = _ncdf(a), _ncdf(b)
        d_m = (2.0 * c / eps2) * (ca - cb) + (2.0 * sd / eps2) * (pa - pb)
        d_sd = (
            -(2.0 * sd / eps2) * (ca - cb)
            - (u / sd) * (a * pa - b * pb)
            - (2.0 * sd / eps2) * (b * pa - a * pb)
            - (w / sd) * (b * pa * (a * a - 1.0) - a * pb * (b * b - 1.0))
        )
        return float(d_m), float(d_sd)
    lo, hi = spec.band_edges(np.asarray(y))
    a = (float(lo) - m) / sd
    b = (float(hi) - m) / sd
    pa, pb = _npdf(a), _npdf(b)
    d_m = (pb - pa) / sd
    d_sd = (b * pb - a * pa) / sd
    return float(d_m), float(d_sd)


def gibbs_risk_grad(
    spec: LossSpec,
    targets,
    moments: PredictiveMoments,
    dmoments: tuple[np.ndarray, np.ndarray],
) -> np.ndarray:
    """Gradient of gibbs_risk through the predictive moments.

    dmoments = (dmean, dsdev), each of shape (P, N): derivatives of the
    moments w.r.t. P parameters.  Returns the (P,) gradient, i.e. the chain
    rule of the closed-form risk with the supplied moment Jacobians.
    """
    y = np.atleast_1d(np.asarray(targets, dtype=float))
    dmean = np.atleast_2d(np.asarray(dmoments[0], dtype=float))
    dsd = np.atleast_2d(np.asarray(dmoments[1], dtype=float))
    n = y.size
    if moments.mean.size != n or dmean.shape[1] != n or dsd.shape != dmean.shape:
        raise ValueError("inconsistent shapes between targets, moments, and dmoments")
    g_m = np.empty(n)
    g_sd = np.empty(n)
    sd = moments.sdev
    for i in range(n):
        g_m[i], g_sd[i] = gibbs_pointwise_partials(spec, y[i], moments.mean[i], sd[i])
    return (dmean @ g_m + dsd @ g_sd) / n


def _ncdf_torch(z: torch.Tensor) -> torch.Tensor:
    return 0.5 * torch.special.erfc(-z / _SQRT2)


def _npdf_torch(z: torch.Tensor) -> torch.Tensor:
    return _INV_SQRT_2PI * torch.exp(-0.5 * z * z)


# Variance floor inside optimization graphs; keeps sqrt differentiable while
# perturbing the risk by far less than any tolerance in use.
_VAR_FLOOR = 1e-18


def gibbs_risk_torch(
    spec: LossSpec, y: np.ndarray, mhat: torch.Tensor, var: torch.Tensor
) -> torch.Tensor:
    """Differentiable Gibbs risk of Gaussian predictions (torch path)."""
    sd = torch.sqrt(var.clamp(min=_VAR_FLOOR))
    y_t = torch.as_tensor(np.asarray(y, dtype=float), dtype=mhat.dtype)
    vals = _gibbs_closed_form(
        spec, y_t if spec.kind != "band" else np.asarray(y, dtype=float),
        mhat, sd,
        xp=torch, ncdf=_ncdf_torch, npdf=_npdf_torch,
        exp=torch.exp,
    )
    return vals.clamp(0.0, 1.0).mean()
