"""Binary KL divergence, its upper inverse, and exact partial derivatives.

The training objective is ``klinv(q, eps)``, the largest p in [q, 1] with
``kl(q || p) <= eps``.  It has no closed form; we compute it by bisection on
the strictly increasing map p -> kl(q || p) and differentiate it through the
implicit-function identity, which yields the two closed-form partials of
:func:`klinv_partials`.
"""

from __future__ import annotations

import math

import torch

__all__ = [
    "BoundaryError",
    "binary_kl",
    "klinv",
    "klinv_partials",
    "klinv_torch",
    "CLAMP_Q_LO",
    "CLAMP_Q_HI",
    "CLAMP_EPS_LO",
]

_DOMAIN_TOL = 1e-12

# Clamps applied before klinv enters a gradient-based objective, so that the
# partial derivatives stay finite (the denominator in klinv_partials vanishes
# as eps -> 0).
CLAMP_Q_LO = 1e-6
CLAMP_Q_HI = 1.0 - 1e-6
CLAMP_EPS_LO = 1e-10

_BISECT_TOL = 1e-11
_BISECT_MAX_ITER = 200


class BoundaryError(ValueError):
    """Raised when klinv partials are requested outside the strict interior."""


def _check_unit_interval(name: str, value: float) -> float:
    if not (-_DOMAIN_TOL <= value <= 1.0 + _DOMAIN_TOL):
        raise ValueError(f"{name}={value!r} outside [0, 1]")
    return min(max(value, 0.0), 1.0)


def binary_kl(q: float, p: float) -> float:
    """kl(q || p) between Bernoulli(q) and Bernoulli(p).

    Uses the conventions 0*ln(0) = 0 and kl = +inf when p is 0 or 1 while q
    differs.  Near p = q the two log terms cancel to O((p-q)^2), so that
    regime is evaluated through log1p of the exact difference, which keeps
    the absolute error at the rounding level of the result itself; the tail
    regimes pick the exact-side logarithm (log vs log1p) per operand.
    """
    q = _check_unit_interval("q", q)
    p = _check_unit_interval("p", p)
    if q == p:
        return 0.0
    if p == 0.0 or p == 1.0:
        return math.inf
    if q == 0.0:
        return -math.log1p(-p)
    if q == 1.0:
        return -math.log(p)
    d = p - q
    if abs(d) < 0.5 * min(q, 1.0 - q):
        total = -q * math.log1p(d / q) - (1.0 - q) * math.log1p(-d / (1.0 - q))
    else:
        ln_p = math.log1p(p - 1.0) if p > 0.5 else math.log(p)
        ln_1mp = math.log(1.0 - p) if p > 0.5 else math.log1p(-p)
        ln_q = math.log1p(q - 1.0) if q > 0.5 else math.log(q)
        ln_1mq = math.log(1.0 - q) if q > 0.5 else math.log1p(-q)
        total = q * (ln_q - ln_p) + (1.0 - q) * (ln_1mq - ln_1mp)
    return max(total, 0.0)


def klinv(q: float, eps: float) -> float:
    """Upper inverse of the binary KL: max{p in [0,1] : kl(q || p) <= eps}.

    Equals the unique p in [q, 1] with kl(q || p) = eps, or 1 when no finite
    solution exists (q = 1 or eps = inf).  Monotone nondecreasing in both
    arguments and capped by Pinsker's inequality at q + sqrt(eps / 2).

    Bisection runs on ln(1 - p), where the divergence is well conditioned
    deep into the tail, followed by a one-ulp walk; the result is exactly
    the largest double-precision p whose divergence does not exceed eps.
    (Near p -> 1 the divergence can jump by more than 1e-9 between adjacent
    doubles, so that supremum is the sharpest answer this format admits.)
    """
    q = _check_unit_interval("q", q)
    if eps < 0.0:
        if eps < -_DOMAIN_TOL:
            raise ValueError(f"eps={eps!r} negative")
        eps = 0.0
    if q >= 1.0 or math.isinf(eps):
        return 1.0
    if eps == 0.0:
        return q
    if q == 0.0:
        # kl(0 || p) = -ln(1 - p); exact closed form.
        return -math.expm1(-eps)

    one_below = math.nextafter(1.0, 0.0)
    if binary_kl(q, one_below) <= eps:
        # Every representable p < 1 satisfies the constraint.
        return one_below

    # Bisect on v = ln(1 - p): kl(q || p) is increasing in p, hence
    # decreasing in v.  v_lo corresponds to the predecessor of 1.
    v_hi = math.log1p(-q)
    v_lo = math.log(2.0**-53)
    for _ in range(_BISECT_MAX_ITER):
        v_mid = 0.5 * (v_lo + v_hi)
        if binary_kl(q, 1.0 - math.exp(v_mid)) > eps:
            v_lo = v_mid
        else:
            v_hi = v_mid
        if v_hi - v_lo <= 4e-16 * max(1.0, abs(v_lo)):
            break
    # The v_hi side satisfies kl <= eps; walk up to the exact supremum.
    p = max(q, 1.0 - math.exp(v_hi))
    for _ in range(_BISECT_MAX_ITER):
        p_up = math.nextafter(p, 1.0)
        if p_up >= 1.0 or binary_kl(q, p_up) > eps:
            break
        p = p_up
    return p


def klinv_partials(q: float, eps: float) -> tuple[float, float]:
    """Exact partials (d klinv/dq, d klinv/deps) at interior (q, eps).

    Obtained by differentiating the identity kl(q || klinv(q, eps)) = eps:

        d/dq   = [ln((1-q)/(1-p)) - ln(q/p)] / [(1-q)/(1-p) - q/p]
        d/deps = 1 / [(1-q)/(1-p) - q/p]

    with p = klinv(q, eps).  Requires q in (0, 1) and eps > 0; the common
    denominator vanishes as p -> q (eps -> 0), which is signalled as a
    :class:`BoundaryError`.
    """
    if not (0.0 < q < 1.0):
        raise ValueError(f"q={q!r} not in the open interval (0, 1)")
    if eps <= 0.0:
        raise ValueError(f"eps={eps!r} must be positive")
    p = klinv(q, eps)
    if eps < 1e-13 or p - q < 1e-13 or p >= 1.0:
        raise BoundaryError(
            f"klinv partials undefined at the boundary: q={q}, eps={eps}, p={p}"
        )
    ratio_hi = (1.0 - q) / (1.0 - p)
    ratio_lo = q / p
    denom = ratio_hi - ratio_lo
    if denom <= 0.0:
        raise BoundaryError(f"degenerate denominator at q={q}, eps={eps}")
    d_dq = (math.log(ratio_hi) - math.log(ratio_lo)) / denom
    d_deps = 1.0 / denom
    return d_dq, d_deps


class _KlInv(torch.autograd.Function):
    """klinv with the analytic partials as its backward rule.

    Forward clamps q into [CLAMP_Q_LO, CLAMP_Q_HI] and eps into
    [CLAMP_EPS_LO, inf) so the backward pass stays finite; gradients are zero
    in the clamped directions, matching the derivative of the clamped map.
    """

    @staticmethod
    def forward(ctx, q: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
        q_val = float(q)
        eps_val = float(eps)
        q_c = min(max(q_val, CLAMP_Q_LO), CLAMP_Q_HI)
        eps_c = max(eps_val, CLAMP_EPS_LO)
        p = klinv(q_c, eps_c)
        ctx.saved = (q_val, eps_val, q_c, eps_c, p)
        return q.new_tensor(p)

    @staticmethod
    def backward(ctx, grad_out: torch.Tensor):
        q_val, eps_val, q_c, eps_c, p = ctx.saved
        try:
            d_dq, d_deps = klinv_partials(q_c, eps_c)
        except BoundaryError:
            # eps at its clamp floor: klinv(q, 0+) = q, so pass the gradient
            # straight through in q and drop the (vanishing) eps direction.
            d_dq, d_deps = 1.0, 0.0
        if not (CLAMP_Q_LO <= q_val <= CLAMP_Q_HI):
            d_dq = 0.0
        if eps_val < CLAMP_EPS_LO:
            d_deps = 0.0
        return grad_out * d_dq, grad_out * d_deps


def klinv_torch(q: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    """Differentiable scalar klinv for use inside optimization objectives."""
    return _KlInv.apply(q, eps)
