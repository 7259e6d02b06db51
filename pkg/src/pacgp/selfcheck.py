"""Self-contained property suite behind `pacgp selfcheck`.

Each check re-derives its expected values from an independent oracle
(arbitrary precision, quadrature, finite differences, dense linear algebra)
and returns (name, passed, detail).  The suite is the fast companion to the
full pytest battery and finishes in well under five minutes.
"""

from __future__ import annotations

import math

import numpy as np

from . import full_gp, sparse_gp
from .binary_kl import binary_kl, klinv, klinv_partials
from .bound import BoundConfig, discretize_hyperparams, pac_bound, penalty, pinsker_bound
from .data import Dataset, load_csv, sample_synthetic_gp, save_csv
from .kernels import HyperParams, MeanFunction, gram, gram_grad
from .losses import LossSpec, PredictiveMoments, gibbs_pointwise
from .training import gradient_check

__all__ = ["run_selfcheck", "CHECKS"]


def _check_klinv_roundtrip():
    qs = np.arange(0.01, 0.995, 0.01)
    eps_grid = np.logspace(-4, math.log10(5.0), 20)
    worst = 0.0
    for q in qs:
        for e in eps_grid:
            q_f, e_f = float(q), float(e)
            p = klinv(q_f, e_f)
            resid = abs(binary_kl(q_f, p) - e_f)
            if resid > 1e-9:
                # Only acceptable when no double can do better: the
                # divergence must jump past eps between p and its successor.
                p_up = math.nextafter(p, 1.0)
                if binary_kl(q_f, p) <= e_f < binary_kl(q_f, p_up):
                    continue
                return False, f"non-optimal inverse at q={q_f}, eps={e_f}"
            worst = max(worst, resid)
            if not (q_f <= p <= min(1.0, q_f + math.sqrt(e_f / 2.0)) + 1e-12):
                return False, f"Pinsker cap violated at q={q_f}, eps={e_f}"
    return True, f"worst in-tolerance residual {worst:.2e}"


def _check_klinv_partials():
    step = 1e-6
    worst = 0.0
    for q in (0.05, 0.2, 0.5, 0.8):
        for e in (0.01, 0.1, 0.5, 2.0):
            d_q, d_e = klinv_partials(q, e)
            fd_q = (klinv(q + step, e) - klinv(q - step, e)) / (2 * step)
            fd_e = (klinv(q, e + step) - klinv(q, e - step)) / (2 * step)
            worst = max(worst, abs(d_q - fd_q) / max(abs(fd_q), 1e-8),
                        abs(d_e - fd_e) / max(abs(fd_e), 1e-8))
    return worst < 1e-5, f"worst partial rel err {worst:.2e}"


def _check_gram_grad():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 3))
    hyper = HyperParams(np.array([0.2, -0.3, 0.1]), 0.4, ard=True)
    grads = gram_grad(hyper, A, A)
    step = 1e-6
    worst = 0.0
    vec = hyper.as_vector()
    for t in range(vec.size):
        plus, minus = vec.copy(), vec.copy()
        plus[t] += step
        minus[t] -= step
        fd = (gram(HyperParams.from_vector(plus, True), A, A)
              - gram(HyperParams.from_vector(minus, True), A, A)) / (2 * step)
        worst = max(worst, np.max(np.abs(grads[t] - fd)) / max(np.max(np.abs(fd)), 1e-10))
    return worst < 1e-5, f"worst kernel-grad rel err {worst:.2e}"


def _check_quadrature():
    from scipy.integrate import quad
    from scipy.stats import norm

    rng = np.random.default_rng(3)
    worst = 0.0
    for kind in ("zero_one", "clipped_square", "inv_gauss", "band"):
        spec = LossSpec(kind, epsilon=0.8)
        for _ in range(10):
            y = rng.normal(0, 1.5)
            m = rng.normal(0, 1.5)
            sd = rng.uniform(0.05, 2.5)
            lo, hi = spec.band_edges(np.asarray(y))
            pts = [p for p in (float(lo), float(hi)) if m - 10 * sd < p < m + 10 * sd]

            def integrand(v):
                from .losses import pointwise_loss
                return norm.pdf(v, m, sd) * pointwise_loss(spec, y, v)

            oracle, _ = quad(integrand, m - 10 * sd, m + 10 * sd, limit=300,
                             epsabs=1e-11, epsrel=1e-11, points=pts or None)
            worst = max(worst, abs(gibbs_pointwise(spec, y, m, sd) - oracle))
    return worst < 1e-8, f"worst closed-form vs quadrature {worst:.2e}"


def _toy_states():
    rng = np.random.default_rng(11)
    n, d = 25, 2
    X = rng.normal(size=(n, d))
    y = np.sin(1.3 * X[:, 0]) + 0.3 * rng.normal(size=n)
    hyper = HyperParams(np.array([0.2, -0.1]), 0.1, ard=True)
    full = full_gp.FullGPState(hyper, MeanFunction(0.0), math.log(0.07), X, y)
    Z = X[rng.choice(n, 5, replace=False)].copy()
    sparse = sparse_gp.SparseGPState(hyper, MeanFunction(0.0), math.log(0.07), Z,
                                     sparse_gp.ParametrizedMode(1.0), X, y)
    return full, sparse


def _check_objective_gradients():
    cfg = BoundConfig(loss=LossSpec("zero_one", epsilon=0.6))
    full, sparse = _toy_states()
    worst = 0.0
    for obj in ("pac_kl", "pac_sqrt", "nll"):
        worst = max(worst, gradient_check(full, obj, bound_cfg=cfg))
    for obj in ("pac_kl", "fitc", "vfe", "dtc"):
        worst = max(worst, gradient_check(sparse, obj, bound_cfg=cfg))
    return worst < 1e-4, f"worst objective-grad rel err {worst:.2e}"


def _check_kl_eigenform():
    full, _ = _toy_states()
    K = gram(full.hyper, full.train_inputs, full.train_inputs)
    lam, E = np.linalg.eigh(K)
    sn2 = full.noise_variance()
    proj = E.T @ (full.train_targets - full.mean.constant)
    kl_eig = (0.5 * np.sum(np.log((lam + sn2) / sn2) - lam / (lam + sn2))
              + 0.5 * np.sum(lam * proj**2 / (lam + sn2) ** 2))
    rel = abs(full_gp.kl_full(full) - kl_eig) / kl_eig
    return rel < 1e-8, f"matrix vs eigenvalue KL rel err {rel:.2e}"


def _check_sparse_full_equivalence():
    full, _ = _toy_states()
    sp = sparse_gp.SparseGPState(full.hyper, full.mean, full.log_noise_variance,
                                 full.train_inputs.copy(),
                                 sparse_gp.ParametrizedMode(1.0),
                                 full.train_inputs, full.train_targets)
    Xs = np.random.default_rng(1).normal(size=(8, full.train_inputs.shape[1]))
    mf = full_gp.full_predict(full, Xs)
    ms = sparse_gp.sparse_predict(sp, Xs)
    err = max(np.max(np.abs(mf.mean - ms.mean)), np.max(np.abs(mf.var - ms.var)))
    kl_rel = abs(full_gp.kl_full(full) - sparse_gp.kl_sparse(sp)) / full_gp.kl_full(full)
    ok = err < 1e-6 and kl_rel < 1e-6
    return ok, f"moment err {err:.2e}, KL rel err {kl_rel:.2e}"


def _check_sparse_kl_oracle():
    _, sp = _toy_states()
    a_m, B = sparse_gp.inducing_posterior_params(sp)
    Kmm = gram(sp.hyper, sp.inducing_inputs, sp.inducing_inputs)
    m = a_m.size
    m_vec = np.full(m, sp.mean.constant)
    _, ld_b = np.linalg.slogdet(B)
    _, ld_k = np.linalg.slogdet(Kmm)
    delta = a_m - m_vec
    direct = 0.5 * (ld_k - ld_b - m + np.trace(np.linalg.solve(Kmm, B))
                    + delta @ np.linalg.solve(Kmm, delta))
    rel = abs(sparse_gp.kl_sparse(sp) - direct) / direct
    return rel < 1e-8, f"sparse KL vs direct Gaussian oracle rel err {rel:.2e}"


def _check_bound_ordering():
    rng = np.random.default_rng(5)
    cfg = BoundConfig(loss=LossSpec("zero_one", epsilon=0.6))
    for _ in range(100):
        q = rng.uniform(0.0, 0.9)
        kl = rng.uniform(0.0, 50.0)
        n = int(rng.integers(20, 5000))
        pen = penalty(n, 2, kl, cfg)
        b = pac_bound(q, kl, pen, n)
        b_pin = pinsker_bound(q, kl, pen, n)
        if not (q <= b + 1e-12 and b <= b_pin + 1e-12):
            return False, f"ordering violated at q={q}, kl={kl}, n={n}"
    return True, "gibbs <= B <= B_Pin on 100 random instances"


def _check_discretization():
    cfg = BoundConfig(loss=LossSpec("zero_one", epsilon=0.6))
    hyper = HyperParams(np.array([0.12344, -7.3]), 3.14159, ard=True)
    once, ln_card = discretize_hyperparams(hyper, cfg)
    twice, _ = discretize_hyperparams(once, cfg)
    idem = np.array_equal(once.as_vector(), twice.as_vector())
    expected = 3 * math.log(1201)
    return (idem and abs(ln_card - expected) < 1e-12,
            f"idempotent={idem}, ln|Theta|={ln_card:.4f}")


def _check_data_roundtrip():
    import tempfile

    rng = np.random.default_rng(9)
    ds = Dataset(rng.normal(size=(20, 3)), rng.normal(size=20), name="t")
    with tempfile.NamedTemporaryFile(suffix=".csv", mode="w", delete=False) as fh:
        path = fh.name
    save_csv(ds, path)
    back = load_csv(path)
    ok = np.array_equal(back.X, ds.X) and np.array_equal(back.y, ds.y)
    return ok, "CSV write/read preserves all 64 bits"


def _check_synthetic_gp():
    train, test = sample_synthetic_gp(2000, 200, 3, seed=0)
    var = float(np.var(train.y))
    ok = abs(var - 1.0) < 0.1 and train.n == 2000 and test.n == 200
    return ok, f"sampled-output variance {var:.3f} (unit prior variance)"


CHECKS = [
    ("klinv round trip + Pinsker cap", _check_klinv_roundtrip),
    ("klinv partial derivatives", _check_klinv_partials),
    ("kernel gradients", _check_gram_grad),
    ("Gibbs-risk closed forms vs quadrature", _check_quadrature),
    ("objective gradients vs finite differences", _check_objective_gradients),
    ("full-GP KL matrix vs eigenvalue form", _check_kl_eigenform),
    ("sparse = full at Z = X", _check_sparse_full_equivalence),
    ("sparse KL vs direct Gaussian oracle", _check_sparse_kl_oracle),
    ("certificate ordering on random grid", _check_bound_ordering),
    ("hyperparameter discretization", _check_discretization),
    ("dataset CSV round trip", _check_data_roundtrip),
    ("synthetic GP sampler", _check_synthetic_gp),
]


def run_selfcheck(verbose: bool = True) -> bool:
    """Run every check; returns True iff all pass."""
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a check crashing is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok &= ok
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    if verbose:
        print("selfcheck:", "all checks passed" if all_ok else "FAILURES present")
    return all_ok
