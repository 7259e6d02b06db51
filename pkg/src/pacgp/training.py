"""Gradient-based minimization of certificate and baseline objectives.

Optimization is plain Adam over the unconstrained parameters (log kernel
hyperparameters, log noise, inducing inputs, optionally alpha or free-form
posterior parameters), with a windowed relative-decrease stopping rule and
optional independent restarts.  Certificate objectives keep the kernel
hyperparameters continuous during descent; snapping them onto the
certificate grid is a separate, final step performed by the bound module.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from typing import Optional, Union

import numpy as np
import torch

from . import full_gp, sparse_gp
from .bound import BoundConfig
from .kernels import HyperParams, MeanFunction
from .losses import LossSpec

__all__ = [
    "TrainConfig",
    "TraceRow",
    "train",
    "multi_restart_study",
    "gradient_check",
    "initial_full_state",
    "initial_sparse_state",
    "write_trace_csv",
]

OBJECTIVES = ("pac_kl", "pac_sqrt", "nll", "vfe", "fitc", "dtc")

# Restart draws for the noise variance, log-uniform over this range.
RESTART_NOISE_RANGE = (1e-5, 1e1)


@dataclasses.dataclass
class TrainConfig:
    """Optimizer settings; defaults follow standard adaptive gradient descent."""

    objective: str = "pac_kl"
    max_iters: int = 2000
    learning_rate: float = 1e-2
    lr_decay: float = 0.5
    min_learning_rate: float = 1e-5
    tolerance: float = 1e-7
    window: int = 20
    restart_count: int = 1
    init_seed: int = 0
    minibatch_size: int = 0
    optimize_alpha: bool = False

    def __post_init__(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")
        if self.window < 1:
            raise ValueError("window must be at least 1")
        if not (0.0 < self.lr_decay < 1.0):
            raise ValueError("lr_decay must lie in (0, 1)")


@dataclasses.dataclass
class TraceRow:
    iteration: int
    objective: float
    kl_over_n: float
    gibbs_train: float


State = Union[full_gp.FullGPState, sparse_gp.SparseGPState]


def _init_hyper(d: int, ard: bool) -> HyperParams:
    # Median-distance heuristic: on standardized inputs the typical squared
    # distance is ~2d, so lengthscale sqrt(d) keeps the kernel responsive at
    # the start in any dimension (unit lengthscales make it numerically
    # diagonal once d is large).
    n_ls = d if ard else 1
    return HyperParams(np.full(n_ls, math.log(float(d))), 0.0, ard=ard)


def initial_full_state(X, y, ard: bool = False, mean_const: float = 0.0) -> full_gp.FullGPState:
    """Neutral full-GP start on standardized data: sqrt(d) lengthscales,
    unit signal variance, noise variance 0.1."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    hyper = _init_hyper(X.shape[1], ard)
    return full_gp.FullGPState(hyper, MeanFunction(mean_const), math.log(0.1), X, y)


def initial_sparse_state(
    X,
    y,
    n_inducing: int,
    ard: bool = False,
    alpha: float = 1.0,
    seed: int = 0,
    mean_const: float = 0.0,
) -> sparse_gp.SparseGPState:
    """Neutral sparse start: inducing inputs are a seeded uniform subsample
    of the training inputs (without replacement)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if not (1 <= n_inducing <= X.shape[0]):
        raise ValueError("n_inducing must lie in [1, N]")
    rng = np.random.default_rng(seed)
    idx = rng.choice(X.shape[0], size=n_inducing, replace=False)
    hyper = _init_hyper(X.shape[1], ard)
    return sparse_gp.SparseGPState(
        hyper, MeanFunction(mean_const), math.log(0.1), X[idx].copy(),
        sparse_gp.ParametrizedMode(alpha), X, y,
    )


def _resolve_data(state: State, data) -> tuple[np.ndarray, np.ndarray]:
    if data is None:
        return state.train_inputs, state.train_targets
    if hasattr(data, "X") and hasattr(data, "y"):
        return np.asarray(data.X, dtype=float), np.asarray(data.y, dtype=float)
    X, y = data
    return np.atleast_2d(np.asarray(X, dtype=float)), np.asarray(y, dtype=float).ravel()


def _with_data(state: State, X: np.ndarray, y: np.ndarray) -> State:
    if isinstance(state, full_gp.FullGPState):
        return full_gp.FullGPState(state.hyper, state.mean, state.log_noise_variance, X, y)
    return sparse_gp.SparseGPState(
        state.hyper, state.mean, state.log_noise_variance, state.inducing_inputs,
        state.mode, X, y,
    )


def _check_objective(state: State, objective: str) -> None:
    if isinstance(state, full_gp.FullGPState):
        if objective not in full_gp.FULL_OBJECTIVES:
            raise ValueError(f"objective {objective!r} undefined for full GPs")
    else:
        if objective not in sparse_gp.SPARSE_OBJECTIVES:
            raise ValueError(f"objective {objective!r} undefined for sparse GPs")


def _trainable(state: State, params: dict, cfg: TrainConfig) -> list[torch.Tensor]:
    keys = ["log_ls", "log_sv"]
    if isinstance(state, full_gp.FullGPState):
        keys.append("log_nv")
    elif isinstance(state.mode, sparse_gp.ParametrizedMode):
        keys += ["log_nv", "Z"]
        if cfg.optimize_alpha:
            params["alpha"].requires_grad_(True)
            keys.append("alpha")
    else:
        keys += ["Z", "a_m", "chol_b"]
    tensors = []
    for k in keys:
        params[k].requires_grad_(True)
        tensors.append(params[k])
    return tensors


def _objective(state: State, params: dict, X, y, objective, bound_cfg, loss, batch=None):
    if isinstance(state, full_gp.FullGPState):
        return full_gp._objective_torch(
            params, X, y, state.mean.constant, objective, bound_cfg, loss, batch
        )
    return sparse_gp._objective_torch(
        params, isinstance(state.mode, sparse_gp.ParametrizedMode),
        X, y, state.mean.constant, objective, bound_cfg, loss, batch,
    )


class RestartFailure(RuntimeError):
    """A restart hit a non-finite objective or gradient."""


def _run_adam(
    state: State,
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    bound_cfg: Optional[BoundConfig],
    loss: Optional[LossSpec],
    seed: int,
) -> tuple[State, list[TraceRow]]:
    params = (
        state._torch_params() if isinstance(state, full_gp.FullGPState)
        else state._torch_params()
    )
    tensors = _trainable(state, params, cfg)
    opt = torch.optim.Adam(tensors, lr=cfg.learning_rate)
    n = y.shape[0]
    batches: Optional[list[np.ndarray]] = None
    rng = np.random.default_rng(seed)
    trace: list[TraceRow] = []
    history: list[float] = []

    def epoch_batches() -> list[np.ndarray]:
        perm = rng.permutation(n)
        k = max(1, cfg.minibatch_size)
        return [perm[i:i + k] for i in range(0, n, k)]

    for it in range(cfg.max_iters):
        if cfg.minibatch_size > 0:
            if not batches:
                batches = epoch_batches()
            batch = batches.pop(0)
        else:
            batch = None
        opt.zero_grad()
        obj, aux = _objective(state, params, X, y, cfg.objective, bound_cfg, loss, batch)
        val = float(obj.detach())
        if not math.isfinite(val):
            raise RestartFailure(f"non-finite objective at iteration {it}")
        obj.backward()
        for t in tensors:
            if t.grad is not None and not torch.all(torch.isfinite(t.grad)):
                raise RestartFailure(f"non-finite gradient at iteration {it}")
        opt.step()
        if "alpha" in params and params["alpha"].requires_grad:
            with torch.no_grad():
                params["alpha"].clamp_(0.0, 1.0)
        trace.append(TraceRow(it, val, aux.get("kl_over_n", math.nan),
                              aux.get("gibbs_train", math.nan)))
        history.append(val)
        # Plateau rule: once a window brings no relative decrease, halve the
        # step; stop when the step floor is reached.
        if cfg.minibatch_size == 0 and len(history) > cfg.window:
            ref = history[-cfg.window - 1]
            if ref - val < cfg.tolerance * max(1.0, abs(ref)):
                lr_now = opt.param_groups[0]["lr"] * cfg.lr_decay
                if lr_now < cfg.min_learning_rate:
                    break
                for group in opt.param_groups:
                    group["lr"] = lr_now
                history.clear()

    final = state._with_torch_params(params)
    # Trailing full-batch evaluation so the recorded optimum never rests on a
    # mini-batch estimate.
    with torch.no_grad():
        obj, aux = _objective(final, final._torch_params(), X, y, cfg.objective,
                              bound_cfg, loss, None)
    trace.append(TraceRow(len(trace), float(obj), aux.get("kl_over_n", math.nan),
                          aux.get("gibbs_train", math.nan)))
    return final, trace


def _randomized_restart(state: State, restart: int, seed: int) -> State:
    """Fresh initialization for restarts beyond the first: noise variance
    drawn log-uniformly and inducing inputs re-subsampled."""
    rng = np.random.default_rng(seed)
    lo, hi = RESTART_NOISE_RANGE
    log_nv = float(rng.uniform(math.log(lo), math.log(hi)))
    if isinstance(state, full_gp.FullGPState):
        return full_gp.FullGPState(state.hyper, state.mean, log_nv,
                                   state.train_inputs, state.train_targets)
    X = state.train_inputs
    Z = state.inducing_inputs
    if X is not None and X.shape[0] >= Z.shape[0]:
        idx = rng.choice(X.shape[0], size=Z.shape[0], replace=False)
        Z = X[idx].copy()
    log_nv_field = log_nv if state.log_noise_variance is not None else None
    return sparse_gp.SparseGPState(state.hyper, state.mean, log_nv_field, Z,
                                   state.mode, state.train_inputs, state.train_targets)


def train(
    initial_state: State,
    data=None,
    cfg: TrainConfig = TrainConfig(),
    bound_cfg: Optional[BoundConfig] = None,
) -> tuple[State, list[TraceRow]]:
    """Minimize the configured objective; returns (trained state, trace).

    Certificate objectives require bound_cfg (its loss and penalty terms
    enter the objective).  With restart_count > 1, later restarts draw a
    fresh noise variance and inducing subsample; the best final objective
    wins.  The returned state's hyperparameters are left continuous.
    """
    _check_objective(initial_state, cfg.objective)
    loss = bound_cfg.loss if bound_cfg is not None else None
    X, y = _resolve_data(initial_state, data)
    state0 = _with_data(initial_state, X, y)
    best: Optional[tuple[float, State, list[TraceRow]]] = None
    failures: list[str] = []
    for r in range(max(1, cfg.restart_count)):
        start = state0 if r == 0 else _randomized_restart(state0, r, cfg.init_seed + r)
        try:
            final, trace = _run_adam(start, X, y, cfg, bound_cfg, loss, cfg.init_seed + r)
        except RestartFailure as exc:
            failures.append(f"restart {r}: {exc}")
            continue
        score = trace[-1].objective
        if best is None or score < best[0]:
            best = (score, final, trace)
    if best is None:
        raise RuntimeError("all restarts failed: " + "; ".join(failures))
    return best[1], best[2]


def multi_restart_study(
    initial_state: State,
    data=None,
    cfg: TrainConfig = TrainConfig(restart_count=100),
    bound_cfg: Optional[BoundConfig] = None,
) -> tuple[list[dict], Optional[int]]:
    """Sensitivity of the optimum to initialization.

    Runs cfg.restart_count independent restarts, each with a log-uniformly
    drawn initial noise variance (and re-subsampled inducing inputs), and
    tabulates (initial noise, learned noise, final objective).  Returns the
    rows plus the index of the global optimum among converged restarts.
    """
    _check_objective(initial_state, cfg.objective)
    loss = bound_cfg.loss if bound_cfg is not None else None
    X, y = _resolve_data(initial_state, data)
    state0 = _with_data(initial_state, X, y)
    rows: list[dict] = []
    for r in range(max(1, cfg.restart_count)):
        start = _randomized_restart(state0, r, cfg.init_seed + r)
        row = {
            "restart": r,
            "init_sigma_n_sq": start.noise_variance(),
            "learned_sigma_n_sq": math.nan,
            "final_objective": math.nan,
            "failure": None,
        }
        try:
            final, trace = _run_adam(start, X, y, cfg, bound_cfg, loss, cfg.init_seed + r)
            row["learned_sigma_n_sq"] = final.noise_variance()
            row["final_objective"] = trace[-1].objective
        except RestartFailure as exc:
            row["failure"] = str(exc)
        rows.append(row)
    finite = [i for i, row in enumerate(rows) if math.isfinite(row["final_objective"])]
    best = min(finite, key=lambda i: rows[i]["final_objective"]) if finite else None
    return rows, best


def objective_value(
    state: State,
    objective: str,
    bound_cfg: Optional[BoundConfig] = None,
    data=None,
) -> float:
    """Scalar objective of a state, dispatching on the model family."""
    if isinstance(state, full_gp.FullGPState):
        return full_gp.objective_value(state, objective, bound_cfg)
    return sparse_gp.objective_value(state, objective, bound_cfg, data)


def gradient_check(
    state: State,
    objective: str,
    data=None,
    step: float = 1e-6,
    bound_cfg: Optional[BoundConfig] = None,
    include_alpha: bool = False,
) -> float:
    """Worst relative disagreement between analytic and central-difference
    gradients over every parameter of the state."""
    X, y = _resolve_data(state, data)
    state = _with_data(state, X, y)
    if isinstance(state, full_gp.FullGPState):
        analytic = full_gp.full_objective_grad(state, objective, bound_cfg)
        flat = state.flat_params()

        def rebuild(vec):
            return state.with_flat_params(vec)
    else:
        analytic = sparse_gp.sparse_objective_grad(
            state, objective, bound_cfg, include_alpha=include_alpha
        )
        flat = state.flat_params(include_alpha=include_alpha)

        def rebuild(vec):
            return state.with_flat_params(vec, include_alpha=include_alpha)

    fd = np.empty_like(flat)
    for i in range(flat.size):
        plus = flat.copy()
        minus = flat.copy()
        plus[i] += step
        minus[i] -= step
        f_plus = objective_value(rebuild(plus), objective, bound_cfg)
        f_minus = objective_value(rebuild(minus), objective, bound_cfg)
        fd[i] = (f_plus - f_minus) / (2.0 * step)
    scale = np.maximum(np.abs(fd), np.abs(analytic))
    floor = max(1e-6 * scale.max(), 1e-10)
    return float(np.max(np.abs(analytic - fd) / np.maximum(scale, floor)))


def write_trace_csv(trace: list[TraceRow], path) -> None:
    """Emit the optimization trace as CSV for plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "objective", "kl_over_n", "gibbs_train"])
        for row in trace:
            writer.writerow([row.iteration, row.objective, row.kl_over_n,
                             row.gibbs_train])
