"""Acceptance suite: one test per exit criterion, at its stated tolerance.

Each test prints a single PASS line on success (run with -s to see them all;
failures surface through the assertions themselves).  Criteria tied to the
Boston housing data skip loudly when the CSV is absent, since it can neither
be bundled nor downloaded in this environment.
"""

import math
import time

import numpy as np
import pytest

from pacgp.binary_kl import binary_kl, klinv, klinv_partials
from pacgp.bound import (
    BoundConfig,
    build_report,
    discretize_hyperparams,
    pac_bound,
    penalty,
)
from pacgp.cli import RunSpec, pol_like_dataset, run_single
from pacgp.data import demo_1d, sample_synthetic_gp, split_and_standardize
from pacgp.full_gp import FullGPState, full_predict, kl_full
from pacgp.kernels import HyperParams, MeanFunction, gram
from pacgp.losses import LossSpec, gibbs_pointwise, gibbs_risk, pointwise_loss
from pacgp.sparse_gp import (
    ParametrizedMode,
    SparseGPState,
    inducing_posterior_params,
    kl_sparse,
    sparse_predict,
)
from pacgp.training import (
    TrainConfig,
    gradient_check,
    initial_full_state,
    initial_sparse_state,
    multi_restart_study,
    train,
)

ZERO_ONE = LossSpec("zero_one", epsilon=0.6)
CFG = BoundConfig(loss=ZERO_ONE)


def _report(name: str, detail: str) -> None:
    print(f"[acceptance] {name}: PASS ({detail})")


class TestCriterion1Klinv:
    def test_klinv_correctness(self):
        start = time.monotonic()
        qs = np.arange(0.01, 0.995, 0.01)
        eps_grid = np.logspace(-4, math.log10(5.0), 20)
        ulp_limited = 0
        for q in qs:
            for eps in eps_grid:
                q_f, e_f = float(q), float(eps)
                p = klinv(q_f, e_f)
                assert q_f <= p <= min(1.0, q_f + math.sqrt(e_f / 2.0)) + 1e-12
                resid = abs(binary_kl(q_f, p) - e_f)
                if resid > 1e-9:
                    # IEEE-754 limit: adjacent doubles near 1 are ~1e-16
                    # apart in p but >1e-9 apart in divergence there; the
                    # returned p must then be the exact supremum over doubles
                    assert binary_kl(q_f, p) <= e_f
                    assert binary_kl(q_f, math.nextafter(p, 1.0)) > e_f
                    ulp_limited += 1
        for eps in eps_grid:
            assert abs(klinv(0.0, float(eps)) - (-math.expm1(-float(eps)))) <= 1e-12
        elapsed = time.monotonic() - start
        assert elapsed < 1.0, f"grid took {elapsed:.2f}s"
        _report("criterion 1",
                f"{qs.size * eps_grid.size} cells in {elapsed * 1e3:.0f} ms, "
                f"{ulp_limited} cells at the double-precision supremum")


class TestCriterion2Derivatives:
    def test_all_gradients_match_finite_differences(self):
        start = time.monotonic()
        worst = {}
        step = 1e-6
        for q in (0.1, 0.35, 0.7):
            for eps in (0.05, 0.4, 1.5):
                d_q, d_e = klinv_partials(q, eps)
                fd_q = (klinv(q + step, eps) - klinv(q - step, eps)) / (2 * step)
                fd_e = (klinv(q, eps + step) - klinv(q, eps - step)) / (2 * step)
                assert abs(d_q - fd_q) / max(abs(fd_q), 1e-8) <= 1e-4
                assert abs(d_e - fd_e) / max(abs(fd_e), 1e-8) <= 1e-4
        rng = np.random.default_rng(21)
        X = rng.uniform(-2, 2, size=(40, 3))
        y = np.sin(1.4 * X[:, 0]) - 0.6 * np.cos(X[:, 1]) + 0.3 * rng.normal(size=40)
        y = (y - y.mean()) / y.std()
        full = initial_full_state(X, y, ard=True)
        for objective in ("pac_kl", "pac_sqrt", "nll"):
            err = gradient_check(full, objective, bound_cfg=CFG)
            worst[f"full/{objective}"] = err
            assert err <= 1e-4, (objective, err)
        for objective, alpha in (("pac_kl", 1.0), ("pac_sqrt", 1.0),
                                 ("fitc", 1.0), ("vfe", 0.0), ("dtc", 0.0)):
            sparse = initial_sparse_state(X, y, 5, ard=True, alpha=alpha, seed=4)
            err = gradient_check(sparse, objective, bound_cfg=CFG)
            worst[f"sparse/{objective}"] = err
            assert err <= 1e-4, (objective, err)
        elapsed = time.monotonic() - start
        assert elapsed < 30.0
        _report("criterion 2",
                f"worst rel err {max(worst.values()):.2e} in {elapsed:.1f}s")


class TestCriterion3GibbsClosedForms:
    def test_quadrature_match(self):
        from scipy.integrate import quad
        from scipy.stats import norm

        start = time.monotonic()
        worst = 0.0
        for kind in ("zero_one", "clipped_square", "inv_gauss", "band"):
            rng = np.random.default_rng(abs(hash(kind)) % 2**31)
            for _ in range(50):
                spec = LossSpec(kind, epsilon=rng.uniform(0.1, 2.0))
                y = rng.normal(0, 1.5)
                m = rng.normal(0, 1.5)
                sd = rng.uniform(0.02, 3.0)
                lo, hi = spec.band_edges(np.asarray(y))
                pts = [p for p in (float(lo), float(hi)) if m - 10 * sd < p < m + 10 * sd]
                oracle, _ = quad(
                    lambda v: norm.pdf(v, m, sd) * pointwise_loss(spec, y, v),
                    m - 10 * sd, m + 10 * sd,
                    limit=400, epsabs=1e-11, epsrel=1e-11, points=pts or None,
                )
                err = abs(gibbs_pointwise(spec, y, m, sd) - oracle)
                worst = max(worst, err)
                assert err <= 1e-8, (kind, y, m, sd, err)
        elapsed = time.monotonic() - start
        assert elapsed < 10.0
        _report("criterion 3", f"worst abs err {worst:.2e} in {elapsed:.1f}s")


class TestCriterion4KlEquivalences:
    def test_equivalences(self):
        start = time.monotonic()
        rng = np.random.default_rng(3)
        # matrix form vs eigenvalue form, N <= 50
        for n in (10, 30, 50):
            X = rng.normal(size=(n, 2))
            y = rng.normal(size=n)
            hyper = HyperParams(rng.uniform(-0.3, 0.3, 2), rng.uniform(-0.3, 0.3),
                                ard=True)
            state = FullGPState(hyper, MeanFunction(0.0), math.log(0.07), X, y)
            K = gram(hyper, X, X)
            lam, E = np.linalg.eigh(K)
            sn2 = state.noise_variance()
            proj = E.T @ y
            kl_eig = (0.5 * np.sum(np.log((lam + sn2) / sn2) - lam / (lam + sn2))
                      + 0.5 * np.sum(lam * proj**2 / (lam + sn2) ** 2))
            assert abs(kl_full(state) - kl_eig) / kl_eig <= 1e-8
        # sparse KL vs direct M-dimensional Gaussian KL, M <= 20
        for m in (5, 20):
            n = 60
            X = rng.normal(size=(n, 2))
            y = np.sin(X[:, 0]) + 0.3 * rng.normal(size=n)
            hyper = HyperParams(rng.uniform(-0.3, 0.3, 2), 0.1, ard=True)
            Z = X[rng.choice(n, m, replace=False)].copy()
            sp = SparseGPState(hyper, MeanFunction(0.0), math.log(0.06), Z,
                               ParametrizedMode(1.0), X, y)
            a_m, b_mm = inducing_posterior_params(sp)
            K_mm = gram(hyper, Z, Z)
            _, ld_b = np.linalg.slogdet(b_mm)
            _, ld_k = np.linalg.slogdet(K_mm)
            direct = 0.5 * (ld_k - ld_b - m + np.trace(np.linalg.solve(K_mm, b_mm))
                            + a_m @ np.linalg.solve(K_mm, a_m))
            assert abs(kl_sparse(sp) - direct) / direct <= 1e-8
        # FITC at Z = X equals the full model
        n = 45
        X = rng.normal(size=(n, 2))
        y = np.sin(X[:, 0]) + 0.3 * rng.normal(size=n)
        hyper = HyperParams(rng.uniform(-0.3, 0.3, 2), 0.1, ard=True)
        full = FullGPState(hyper, MeanFunction(0.0), math.log(0.06), X, y)
        sp = SparseGPState(hyper, MeanFunction(0.0), math.log(0.06), X.copy(),
                           ParametrizedMode(1.0), X, y)
        Xs = rng.normal(size=(15, 2))
        mf, ms = full_predict(full, Xs), sparse_predict(sp, Xs)
        assert np.max(np.abs(mf.mean - ms.mean)) <= 1e-6
        assert np.max(np.abs(mf.var - ms.var)) <= 1e-6
        assert abs(kl_full(full) - kl_sparse(sp)) / kl_full(full) <= 1e-6
        elapsed = time.monotonic() - start
        assert elapsed < 30.0
        _report("criterion 4", f"all equivalences hold, {elapsed:.1f}s")


class TestCriterion5PenaltyGoldens:
    def test_golden_numbers(self):
        two_component = CFG.ln_theta_card(2)
        assert two_component == pytest.approx(2 * math.log(1201), abs=1e-12)
        assert f"{two_component:.4g}" == "14.18"
        # (N, T) triples at the published scales; reported values are printed
        # to four decimals, so agreement is asserted to one unit in the last
        # printed digit
        for n, t, ln_theta_over_n, ln_conf_over_n in (
            (12000, 27, 0.0160, 0.0008),
            (39146, 2, 0.0003, 0.0003),
            (32000, 9, 0.0020, 0.0003),
        ):
            pen = penalty(n, t, 0.0, CFG)
            assert pen.ln_theta_card / n == pytest.approx(ln_theta_over_n, abs=1e-4)
            assert pen.ln_conf / n == pytest.approx(ln_conf_over_n, abs=1e-4)
        _report("criterion 5", "ln|Theta| = 14.18 and all penalty triplets match")


def _boston_aggregate(boston, method_cfg, epsilon, repeats=10, seed=0):
    vals = {"b": [], "kl_over_n": [], "gibbs_test": [], "b_pinsker": []}
    ok_pinsker = True
    for i in range(repeats):
        spec = RunSpec(dataset="boston", epsilon=epsilon, seed=seed,
                       max_iters=1500, **method_cfg)
        report, _, _ = run_single(spec, i, raw=boston)
        for key in vals:
            vals[key].append(getattr(report, key))
        ok_pinsker &= report.b <= report.b_pinsker + 1e-12
    return {k: float(np.mean(v)) for k, v in vals.items()}, ok_pinsker


@pytest.mark.slow
class TestCriterion6Boston:
    def test_boston_reproduction(self, boston):
        kl_pac, ok1 = _boston_aggregate(
            boston, dict(model="full", objective="pac_kl"), 0.6)
        sqrt_pac, ok2 = _boston_aggregate(
            boston, dict(model="full", objective="pac_sqrt"), 0.6)
        full_nll, ok3 = _boston_aggregate(
            boston, dict(model="full", objective="nll"), 0.6)
        assert 0.30 <= kl_pac["b"] <= 0.37
        assert 0.08 <= kl_pac["kl_over_n"] <= 0.13
        assert 0.08 <= kl_pac["gibbs_test"] <= 0.15
        assert 0.39 <= full_nll["b"] <= 0.48
        assert kl_pac["b"] < sqrt_pac["b"] < full_nll["b"]
        assert ok1 and ok2 and ok3
        _report("criterion 6",
                f"B(kl)={kl_pac['b']:.3f} < B(sqrt)={sqrt_pac['b']:.3f} "
                f"< B(nll)={full_nll['b']:.3f}")


@pytest.mark.slow
class TestCriterion7EpsilonTrend:
    def test_bound_decreases_with_epsilon(self, boston):
        means = []
        for eps in (0.2, 0.4, 0.6, 0.8, 1.0):
            agg, _ = _boston_aggregate(
                boston, dict(model="full", objective="pac_kl"), eps)
            means.append(agg["b"])
        assert all(b2 < b1 for b1, b2 in zip(means, means[1:])), means
        _report("criterion 7", " > ".join(f"{b:.3f}" for b in means))


@pytest.mark.slow
class TestCriterion8SparseDirectional:
    def test_method_ordering_on_pol_surrogate(self):
        raw = pol_like_dataset(seed=0)
        aggregates = {}
        for name, objective, alpha in (("kl-pac-sgp", "pac_kl", 1.0),
                                       ("vfe", "vfe", 0.0),
                                       ("fitc", "fitc", 1.0)):
            bs = []
            for i in range(5):
                spec = RunSpec(dataset="pol-like", model="sparse",
                               objective=objective, alpha=alpha, n_inducing=100,
                               ard=True, epsilon=0.6, seed=0, max_iters=800)
                report, _, _ = run_single(spec, i, raw=raw)
                assert report.b <= report.b_pinsker + 1e-12
                bs.append(report.b)
            aggregates[name] = float(np.mean(bs))
        assert aggregates["kl-pac-sgp"] < aggregates["vfe"] < aggregates["fitc"], aggregates
        _report("criterion 8",
                f"B: kl-pac-sgp {aggregates['kl-pac-sgp']:.3f} < "
                f"vfe {aggregates['vfe']:.3f} < fitc {aggregates['fitc']:.3f}")


@pytest.mark.slow
class TestCriterion9OneDimensionalToy:
    def test_kl_scale_at_twice_noise(self):
        ds = demo_1d()
        full, _ = train(initial_full_state(ds.X, ds.y),
                        cfg=TrainConfig(objective="nll", max_iters=1500))
        eps = 2.0 * math.sqrt(full.noise_variance())
        cfg = BoundConfig(loss=LossSpec("zero_one", epsilon=eps))
        sparse, _ = train(initial_sparse_state(ds.X, ds.y, 15, seed=0),
                          cfg=TrainConfig(objective="pac_kl", max_iters=1500),
                          bound_cfg=cfg)
        kl_over_n = kl_sparse(sparse) / ds.n
        assert abs(kl_over_n - 0.109) <= 0.03, kl_over_n
        _report("criterion 9a", f"KL/N = {kl_over_n:.3f} at eps = 2 sigma_n")

    def test_multi_restart_overfitting_signature(self):
        ds = demo_1d(half=True)
        cfg_b = BoundConfig(loss=ZERO_ONE)
        results = {}
        for objective in ("fitc", "pac_kl"):
            state0 = initial_sparse_state(ds.X, ds.y, 8, seed=0)
            cfg = TrainConfig(objective=objective, max_iters=800,
                              restart_count=100, init_seed=100)
            rows, best = multi_restart_study(state0, cfg=cfg, bound_cfg=cfg_b)
            learned = np.array([r["learned_sigma_n_sq"] for r in rows
                                if r["failure"] is None])
            results[objective] = (learned, rows[best]["learned_sigma_n_sq"])
        fitc_learned, _ = results["fitc"]
        _, pac_best = results["pac_kl"]
        assert np.any(fitc_learned < 1e-4), "no FITC restart collapsed the noise"
        assert pac_best > 1e-3, pac_best
        _report("criterion 9b",
                f"{int((fitc_learned < 1e-4).sum())} FITC restarts below 1e-4; "
                f"certificate-trained optimum at {pac_best:.2e}")


@pytest.mark.slow
class TestCriterion10DiscretizationSweep:
    def test_rounding_and_penalty_attribution(self):
        train_ds, test_ds = sample_synthetic_gp(2000, 10000, 3, seed=0)
        state, _ = train(initial_full_state(train_ds.X, train_ds.y, ard=True),
                         cfg=TrainConfig(objective="pac_kl", max_iters=800),
                         bound_cfg=CFG)
        pre_risk = gibbs_risk(ZERO_ONE, train_ds.y, full_predict(state, train_ds.X))
        rows = {}
        for r in (1, 2, 4):
            cfg_r = BoundConfig(loss=ZERO_ONE, grid_digits=r)
            hyper_r, _ = discretize_hyperparams(state.hyper, cfg_r)
            state_r = FullGPState(hyper_r, state.mean, state.log_noise_variance,
                                  state.train_inputs, state.train_targets)
            report = build_report(state_r, train_ds, test_ds, cfg_r)
            assert abs(report.gibbs_train - pre_risk) < 1e-3, (r, report.gibbs_train)
            rows[r] = report
        # bound growth across r is the cardinality term alone: substituting
        # the finest grid's risk and KL with each r's ln|Theta| reproduces
        # every bound to 1e-3
        ref = rows[4]
        for r in (1, 2):
            pen_r = penalty(2000, state.hyper.n_components, ref.kl,
                            BoundConfig(loss=ZERO_ONE, grid_digits=r))
            predicted = pac_bound(ref.gibbs_train, ref.kl, pen_r, 2000)
            assert abs(rows[r].b - predicted) < 1e-3, (r, rows[r].b, predicted)
        _report("criterion 10",
                f"|dRs| < 1e-3 and penalty-only bound shifts for r in (1,2,4): "
                f"B = {rows[1].b:.4f}/{rows[2].b:.4f}/{rows[4].b:.4f}")


@pytest.mark.slow
class TestCriterion11Scaling:
    def test_linear_time_and_bounded_memory(self):
        import resource

        rng = np.random.default_rng(0)

        def timed_run(n):
            X = rng.uniform(-3, 3, size=(n, 4))
            y = np.sin(X[:, 0]) + 0.5 * np.cos(2 * X[:, 1]) + 0.2 * rng.normal(size=n)
            state = initial_sparse_state(X, y, 50, seed=0)
            t0 = time.monotonic()
            iters = 10
            _, trace = train(state, cfg=TrainConfig(objective="pac_kl",
                                                    max_iters=iters),
                             bound_cfg=CFG)
            assert math.isfinite(trace[-1].objective)
            return (time.monotonic() - t0) / iters

        t_small = timed_run(20_000)
        t_large = timed_run(100_000)
        peak_gb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 2**20
        assert peak_gb < 2.0, f"peak RSS {peak_gb:.2f} GiB"
        ratio = t_large / t_small
        assert ratio <= 10.0, f"super-linear scaling: {ratio:.1f}x for 5x data"
        _report("criterion 11",
                f"per-iteration time x{ratio:.1f} for 5x data, "
                f"peak RSS {peak_gb:.2f} GiB")
