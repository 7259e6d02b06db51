"""Command-line entry point: train/evaluate runs, comparisons, sweeps, selfcheck.

Subcommands
    train                 train one configuration over repeated splits and
                          emit per-repeat certificates plus an aggregate
    compare               run several methods on a shared dataset/loss and
                          tabulate their certificate rows
    discretization-sweep  certificate vs. grid-resolution study on synthetic data
    selfcheck             fast property suite; exit 0 iff everything passes

Exit codes: 0 success, 2 usage error, 3 numeric failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from typing import Optional

import numpy as np

from . import full_gp, sparse_gp
from .bound import BoundConfig, BoundReport, build_report, discretize_hyperparams
from .data import Dataset, demo_1d, load_csv, sample_synthetic_gp, split_and_standardize
from .kernels import CholeskyError, HyperParams, MeanFunction
from .losses import LossSpec
from .training import (
    TrainConfig,
    initial_full_state,
    initial_sparse_state,
    train,
    write_trace_csv,
)

__all__ = [
    "RunSpec",
    "METHODS",
    "MODEL_SCHEMA_VERSION",
    "main",
    "cmd_train",
    "cmd_compare",
    "cmd_discretization_sweep",
    "cmd_selfcheck",
    "save_model",
    "load_model",
    "resolve_dataset",
]

MODEL_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

# method name -> (model, objective, prediction alpha)
METHODS = {
    "kl-pac-gp": ("full", "pac_kl", None),
    "sqrt-pac-gp": ("full", "pac_sqrt", None),
    "full-gp": ("full", "nll", None),
    "kl-pac-sgp": ("sparse", "pac_kl", 1.0),
    "sqrt-pac-sgp": ("sparse", "pac_sqrt", 1.0),
    "vfe": ("sparse", "vfe", 0.0),
    "fitc": ("sparse", "fitc", 1.0),
    "dtc": ("sparse", "dtc", 0.0),
}

_LOSS_NAMES = {
    "zero-one": "zero_one",
    "clipped-square": "clipped_square",
    "inv-gauss": "inv_gauss",
    "band-rel": "band",
}

_OBJECTIVE_NAMES = {
    "pac-kl": "pac_kl",
    "pac-sqrt": "pac_sqrt",
    "mle": "nll",
    "vfe": "vfe",
    "fitc": "fitc",
    "dtc": "dtc",
}


class UsageError(ValueError):
    pass


@dataclasses.dataclass
class RunSpec:
    """One training configuration, resolved from CLI flags."""

    dataset: str
    model: str = "full"
    objective: str = "pac_kl"
    loss_kind: str = "zero_one"
    epsilon: float = 0.6
    ard: bool = False
    n_inducing: Optional[int] = None
    alpha: float = 1.0
    optimize_alpha: bool = False
    delta: float = 0.01
    grid_half_width: float = 6.0
    grid_digits: int = 2
    seed: int = 0
    repeats: int = 1
    subsample: Optional[int] = None
    minibatch: int = 0
    max_iters: int = 2000
    learning_rate: float = 1e-2
    restarts: int = 1
    stats_scope: str = "train"
    target_column: Optional[str] = None
    out: Optional[str] = None
    emit_traces: bool = False

    def __post_init__(self) -> None:
        if self.model not in ("full", "sparse"):
            raise UsageError(f"unknown model {self.model!r}")
        if self.model == "full" and self.objective not in full_gp.FULL_OBJECTIVES:
            raise UsageError(f"objective {self.objective!r} invalid for the full model")
        if self.model == "sparse" and self.objective not in sparse_gp.SPARSE_OBJECTIVES:
            raise UsageError(f"objective {self.objective!r} invalid for the sparse model")
        if self.model == "sparse":
            if self.n_inducing is None or self.n_inducing < 1:
                raise UsageError("sparse model requires --num-inducing >= 1")
        elif self.n_inducing is not None:
            raise UsageError("--num-inducing only applies to the sparse model")
        if self.repeats < 1:
            raise UsageError("--repeats must be at least 1")

    def bound_config(self) -> BoundConfig:
        return BoundConfig(
            loss=LossSpec(self.loss_kind, epsilon=self.epsilon),
            delta=self.delta,
            grid_half_width=self.grid_half_width,
            grid_digits=self.grid_digits,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            objective=self.objective,
            max_iters=self.max_iters,
            learning_rate=self.learning_rate,
            restart_count=self.restarts,
            init_seed=self.seed,
            minibatch_size=self.minibatch,
            optimize_alpha=self.optimize_alpha,
        )


def _boston_path() -> Optional[str]:
    candidates = []
    env = os.environ.get("PACGP_DATA_DIR")
    if env:
        candidates.append(os.path.join(env, "boston.csv"))
    candidates.append(os.path.join(os.getcwd(), "data", "boston.csv"))
    for c in candidates:
        if os.path.exists(c):
            return c
    return None


def resolve_dataset(name: str, seed: int = 0,
                    target_column: Optional[str] = None) -> Dataset:
    """Builtin dataset names or a CSV path.

    Builtins: demo1d, demo1d-half, synthetic-gp (3-d GP draw, 2000 train
    rows' worth before splitting), pol-like (26-d surrogate with a few
    active dimensions), boston (requires the CSV to be present locally; see
    the README for where to put it).
    """
    if name == "demo1d":
        return demo_1d()
    if name == "demo1d-half":
        return demo_1d(half=True)
    if name == "synthetic-gp":
        train_ds, test_ds = sample_synthetic_gp(2500, 0, 3, seed=seed)
        return Dataset(train_ds.X, train_ds.y, name="synthetic-gp",
                       metadata=train_ds.metadata)
    if name == "pol-like":
        return pol_like_dataset(seed=seed)
    if name == "boston":
        path = _boston_path()
        if path is None:
            raise FileNotFoundError(
                "boston dataset not found: place the 506x14 CSV at "
                "$PACGP_DATA_DIR/boston.csv or ./data/boston.csv (see README)"
            )
        ds = load_csv(path, target_column=target_column or "medv")
        ds.name = "boston"
        return ds
    if os.path.exists(name):
        col: object = target_column
        if col is not None and col.lstrip("-").isdigit():
            col = int(col)
        return load_csv(name, target_column=col)
    raise FileNotFoundError(f"no such dataset or file: {name!r}")


def pol_like_dataset(seed: int = 0, n: int = 3750, d: int = 26) -> Dataset:
    """High-dimensional surrogate with ARD-favourable structure.

    A stand-in for large tabular benchmarks that cannot be bundled: only a
    handful of input dimensions carry signal (short lengthscales), the rest
    are inert, and the noise floor is moderate.
    """
    log_ls = np.full(d, math.log(40.0))
    log_ls[:4] = np.log([0.9, 1.1, 1.4, 1.8])
    train_ds, _ = sample_synthetic_gp(
        n, 0, d, seed=seed, log_lengthscales=log_ls, noise_sd=0.35,
        block_size=4096,
    )
    return Dataset(train_ds.X, train_ds.y, name="pol-like",
                   metadata=dict(train_ds.metadata, active_dims=4))


def _subsample(ds: Dataset, cap: Optional[int], seed: int) -> Dataset:
    if cap is None or ds.n <= cap:
        return ds
    idx = np.random.default_rng(seed).choice(ds.n, size=cap, replace=False)
    return Dataset(ds.X[idx], ds.y[idx], name=ds.name,
                   metadata=dict(ds.metadata, subsampled_to=cap))


def save_model(state, path) -> None:
    """Serialize a model state as versioned JSON."""
    doc: dict = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "hyper": {
            "log_lengthscales": state.hyper.log_lengthscales.tolist(),
            "log_signal_variance": state.hyper.log_signal_variance,
            "ard": state.hyper.ard,
        },
        "mean_constant": state.mean.constant,
        "log_noise_variance": state.log_noise_variance,
        "train_inputs": None if state.train_inputs is None
        else np.asarray(state.train_inputs).tolist(),
        "train_targets": None if state.train_targets is None
        else np.asarray(state.train_targets).tolist(),
    }
    if isinstance(state, full_gp.FullGPState):
        doc["model"] = "full"
    else:
        doc["model"] = "sparse"
        doc["inducing_inputs"] = state.inducing_inputs.tolist()
        if isinstance(state.mode, sparse_gp.ParametrizedMode):
            doc["mode"] = {"kind": "parametrized", "alpha": state.mode.alpha}
        else:
            doc["mode"] = {
                "kind": "free_form",
                "a_m": state.mode.a_m.tolist(),
                "chol_b": state.mode.chol_b.tolist(),
            }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path):
    """Inverse of save_model."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema {doc.get('schema_version')!r}")
    hyper = HyperParams(
        np.asarray(doc["hyper"]["log_lengthscales"]),
        doc["hyper"]["log_signal_variance"],
        ard=doc["hyper"]["ard"],
    )
    mean = MeanFunction(doc["mean_constant"])
    X = None if doc["train_inputs"] is None else np.asarray(doc["train_inputs"])
    y = None if doc["train_targets"] is None else np.asarray(doc["train_targets"])
    if doc["model"] == "full":
        return full_gp.FullGPState(hyper, mean, doc["log_noise_variance"], X, y)
    mode_doc = doc["mode"]
    if mode_doc["kind"] == "parametrized":
        mode: object = sparse_gp.ParametrizedMode(mode_doc["alpha"])
    else:
        mode = sparse_gp.FreeFormMode(np.asarray(mode_doc["a_m"]),
                                      np.asarray(mode_doc["chol_b"]))
    return sparse_gp.SparseGPState(
        hyper, mean, doc["log_noise_variance"], np.asarray(doc["inducing_inputs"]),
        mode, X, y,
    )


def _discretized(state, cfg: BoundConfig):
    hyper, _ = discretize_hyperparams(state.hyper, cfg)
    if isinstance(state, full_gp.FullGPState):
        return full_gp.FullGPState(hyper, state.mean, state.log_noise_variance,
                                   state.train_inputs, state.train_targets)
    return sparse_gp.SparseGPState(hyper, state.mean, state.log_noise_variance,
                                   state.inducing_inputs, state.mode,
                                   state.train_inputs, state.train_targets)


def run_single(spec: RunSpec, repeat_index: int,
               raw: Optional[Dataset] = None) -> tuple[BoundReport, object, list]:
    """One split+train+certify cycle; returns (report, state, trace)."""
    if raw is None:
        raw = resolve_dataset(spec.dataset, seed=spec.seed,
                              target_column=spec.target_column)
    raw = _subsample(raw, spec.subsample, spec.seed)
    split_seed = spec.seed + repeat_index
    train_ds, test_ds = split_and_standardize(raw, seed=split_seed,
                                              stats_scope=spec.stats_scope)
    bound_cfg = spec.bound_config()
    t0 = time.perf_counter()
    if spec.model == "full":
        state0 = initial_full_state(train_ds.X, train_ds.y, ard=spec.ard)
    else:
        state0 = initial_sparse_state(
            train_ds.X, train_ds.y, spec.n_inducing, ard=spec.ard,
            alpha=spec.alpha, seed=split_seed,
        )
    trained, trace = train(state0, cfg=spec.train_config(), bound_cfg=bound_cfg)
    wall = time.perf_counter() - t0
    certified = _discretized(trained, bound_cfg)
    meta = {
        **train_ds.manifest(),
        "model": spec.model,
        "objective": spec.objective,
        "seed": split_seed,
        "repeat": repeat_index,
        "wall_time_s": wall,
        "inducing_init": "uniform-subsample",
    }
    if spec.model == "sparse":
        meta["m"] = spec.n_inducing
        meta["alpha"] = (certified.mode.alpha
                         if isinstance(certified.mode, sparse_gp.ParametrizedMode)
                         else None)
    report = build_report(certified, train_ds, test_ds, bound_cfg, metadata=meta)
    return report, certified, trace


_AGG_FIELDS = ("b", "b_pinsker", "gibbs_train", "gibbs_test", "mse_test",
               "kl_over_n", "sigma_n_sq", "bayes_bound")


def aggregate_reports(reports: list[BoundReport]) -> dict:
    """Mean and standard error of every metric over repeats."""
    out: dict = {"n_repeats": len(reports)}
    for field in _AGG_FIELDS:
        vals = np.array([getattr(r, field) for r in reports], dtype=float)
        out[field] = {
            "mean": float(np.mean(vals)),
            "stderr": float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
            if len(vals) > 1 else 0.0,
        }
    return out


def _max_workers() -> int:
    env = os.environ.get("PACGP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _run_repeat_job(args):
    spec_dict, i = args
    spec = RunSpec(**spec_dict)
    report, state, trace = run_single(spec, i)
    return i, report, state, trace


def cmd_train(spec: RunSpec) -> dict:
    """Train `repeats` models on fresh splits; emit reports, models, aggregate."""
    out_dir = spec.out or "."
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(dataclasses.asdict(spec), i) for i in range(spec.repeats)]
    results = []
    workers = min(_max_workers(), spec.repeats)
    if workers > 1:
        import concurrent.futures as futures
        import multiprocessing as mp

        with futures.ProcessPoolExecutor(
            max_workers=workers, mp_context=mp.get_context("spawn")
        ) as pool:
            results = sorted(pool.map(_run_repeat_job, jobs), key=lambda r: r[0])
    else:
        results = [_run_repeat_job(j) for j in jobs]
    reports = []
    for i, report, state, trace in results:
        reports.append(report)
        with open(os.path.join(out_dir, f"report_{i:03d}.json"), "w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
        save_model(state, os.path.join(out_dir, f"model_{i:03d}.json"))
        if spec.emit_traces:
            write_trace_csv(trace, os.path.join(out_dir, f"trace_{i:03d}.csv"))
    agg = {
        "spec": {k: v for k, v in dataclasses.asdict(spec).items() if v is not None},
        **aggregate_reports(reports),
    }
    with open(os.path.join(out_dir, "aggregate.json"), "w") as fh:
        json.dump(agg, fh, indent=2)
    b = agg["b"]
    print(f"{spec.objective} on {spec.dataset}: "
          f"B = {b['mean']:.4f} +/- {b['stderr']:.4f} over {spec.repeats} repeats")
    return agg


def cmd_compare(specs: list[RunSpec], out_dir: str) -> list[dict]:
    """Run several specs sharing a dataset and loss; tabulate aggregate rows."""
    if not specs:
        raise UsageError("compare needs at least one method spec")
    key = {(s.dataset, s.loss_kind, s.epsilon) for s in specs}
    if len(key) != 1:
        raise UsageError("compare specs must share dataset and loss")
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for spec in specs:
        sub = dataclasses.replace(
            spec, out=os.path.join(out_dir, _spec_tag(spec)))
        agg = cmd_train(sub)
        row = {
            "method": _spec_tag(spec),
            "model": spec.model,
            "objective": spec.objective,
            "m": spec.n_inducing,
        }
        for field in _AGG_FIELDS:
            row[field] = agg[field]["mean"]
            row[field + "_stderr"] = agg[field]["stderr"]
        rows.append(row)
    with open(os.path.join(out_dir, "comparison.json"), "w") as fh:
        json.dump(rows, fh, indent=2)
    _write_rows_csv(rows, os.path.join(out_dir, "comparison.csv"))
    return rows


def _spec_tag(spec: RunSpec) -> str:
    for name, (model, objective, _) in METHODS.items():
        if model == spec.model and objective == spec.objective:
            tag = name
            break
    else:
        tag = f"{spec.model}-{spec.objective}"
    if spec.model == "sparse":
        tag += f"-m{spec.n_inducing}"
    return tag


def _write_rows_csv(rows: list[dict], path: str) -> None:
    import csv as _csv

    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)


def cmd_discretization_sweep(
    l_set: list[float],
    r_set: list[int],
    n_train: int = 2000,
    n_test: int = 10000,
    d: int = 3,
    seed: int = 0,
    epsilon: float = 0.6,
    max_iters: int = 2000,
    retrain_per_cell: bool = False,
    out_dir: str = ".",
) -> list[dict]:
    """Certificate versus grid resolution on data drawn from a known GP.

    Trains an ARD full GP on the certificate objective, then evaluates the
    certificate for every (L, r) grid: risks both before (continuous
    parameters) and after rounding, the resulting bound, and the penalty.
    With retrain_per_cell the model is retrained under each cell's penalty
    (slower; the shared-model mode isolates the pure discretization effect).
    """
    from .losses import gibbs_risk

    os.makedirs(out_dir, exist_ok=True)
    train_ds, test_ds = sample_synthetic_gp(n_train, n_test, d, seed=seed)
    rows = []

    def fit(cfg: BoundConfig):
        state0 = initial_full_state(train_ds.X, train_ds.y, ard=True)
        tc = TrainConfig(objective="pac_kl", max_iters=max_iters, init_seed=seed)
        state, _ = train(state0, cfg=tc, bound_cfg=cfg)
        return state

    base_cfg = BoundConfig(loss=LossSpec("zero_one", epsilon=epsilon),
                           grid_half_width=max(l_set),
                           grid_digits=max(r_set))
    shared_state = None if retrain_per_cell else fit(base_cfg)
    for L in l_set:
        for r in r_set:
            cfg = BoundConfig(loss=LossSpec("zero_one", epsilon=epsilon),
                              grid_half_width=L, grid_digits=r)
            state = fit(cfg) if retrain_per_cell else shared_state
            pre_tr = gibbs_risk(cfg.loss, train_ds.y,
                                full_gp.full_predict(state, train_ds.X))
            certified = _discretized(state, cfg)
            report = build_report(certified, train_ds, test_ds, cfg,
                                  metadata={"L": L, "r": r, "seed": seed})
            rows.append({
                "L": L,
                "r": r,
                "ln_theta_card": report.penalty.ln_theta_card,
                "b": report.b,
                "gibbs_train_pre": pre_tr,
                "gibbs_train_post": report.gibbs_train,
                "gibbs_test_post": report.gibbs_test,
                "kl_over_n": report.kl_over_n,
            })
    with open(os.path.join(out_dir, "discretization_sweep.json"), "w") as fh:
        json.dump(rows, fh, indent=2)
    _write_rows_csv(rows, os.path.join(out_dir, "discretization_sweep.csv"))
    for row in rows:
        print(f"L={row['L']:g} r={row['r']} ln|Theta|={row['ln_theta_card']:.2f} "
              f"B={row['b']:.4f} dRs={abs(row['gibbs_train_post'] - row['gibbs_train_pre']):.2e}")
    return rows


def cmd_selfcheck() -> int:
    from .selfcheck import run_selfcheck

    return EXIT_OK if run_selfcheck() else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pacgp",
        description="GP regression with trainable PAC-Bayes risk certificates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--dataset", required=True,
                       help="CSV path or builtin: demo1d, demo1d-half, "
                            "synthetic-gp, pol-like, boston")
        p.add_argument("--target-column", default=None)
        p.add_argument("--loss", default="zero-one", choices=sorted(_LOSS_NAMES))
        p.add_argument("--epsilon", type=float, default=0.6)
        p.add_argument("--ard", action="store_true")
        p.add_argument("--delta", type=float, default=0.01)
        p.add_argument("--grid-L", type=float, default=6.0)
        p.add_argument("--grid-digits", type=int, default=2)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--repeats", type=int, default=1)
        p.add_argument("--subsample", type=int, default=None)
        p.add_argument("--minibatch", type=int, default=0)
        p.add_argument("--max-iters", type=int, default=2000)
        p.add_argument("--learning-rate", type=float, default=1e-2)
        p.add_argument("--restarts", type=int, default=1)
        p.add_argument("--stats-scope", default="train", choices=("train", "all"))
        p.add_argument("--out", default=".")
        p.add_argument("--emit-traces", action="store_true")

    p_train = sub.add_parser("train", help="train and certify one configuration")
    add_common(p_train)
    p_train.add_argument("--model", default="full", choices=("full", "sparse"))
    p_train.add_argument("--objective", default="pac-kl",
                         choices=sorted(_OBJECTIVE_NAMES))
    p_train.add_argument("--num-inducing", type=int, default=None)
    p_train.add_argument("--alpha", type=float, default=None,
                         help="posterior interpolation (1=FITC-style, 0=VFE-style)")
    p_train.add_argument("--optimize-alpha", action="store_true")

    p_cmp = sub.add_parser("compare", help="run several methods on one dataset")
    add_common(p_cmp)
    p_cmp.add_argument("--methods", required=True,
                       help="comma list from: " + ",".join(sorted(METHODS)))
    p_cmp.add_argument("--num-inducing", default=None,
                       help="comma list of M values for the sparse methods")

    p_sweep = sub.add_parser("discretization-sweep",
                             help="bound vs grid resolution on synthetic data")
    p_sweep.add_argument("--L-set", default="6")
    p_sweep.add_argument("--r-set", default="1,2,4")
    p_sweep.add_argument("--n-train", type=int, default=2000)
    p_sweep.add_argument("--n-test", type=int, default=10000)
    p_sweep.add_argument("--dim", type=int, default=3)
    p_sweep.add_argument("--epsilon", type=float, default=0.6)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--max-iters", type=int, default=2000)
    p_sweep.add_argument("--retrain-per-cell", action="store_true")
    p_sweep.add_argument("--out", default=".")

    sub.add_parser("selfcheck", help="run the property suite")
    return parser


def _spec_from_args(args, model: str, objective: str,
                    n_inducing: Optional[int], alpha: Optional[float]) -> RunSpec:
    default_alpha = {"vfe": 0.0, "dtc": 0.0}.get(objective, 1.0)
    return RunSpec(
        dataset=args.dataset,
        model=model,
        objective=objective,
        loss_kind=_LOSS_NAMES[args.loss],
        epsilon=args.epsilon,
        ard=args.ard,
        n_inducing=n_inducing,
        alpha=default_alpha if alpha is None else alpha,
        optimize_alpha=getattr(args, "optimize_alpha", False),
        delta=args.delta,
        grid_half_width=args.grid_L,
        grid_digits=args.grid_digits,
        seed=args.seed,
        repeats=args.repeats,
        subsample=args.subsample,
        minibatch=args.minibatch,
        max_iters=args.max_iters,
        learning_rate=args.learning_rate,
        restarts=args.restarts,
        stats_scope=args.stats_scope,
        target_column=args.target_column,
        out=args.out,
        emit_traces=args.emit_traces,
    )


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            spec = _spec_from_args(
                args, args.model, _OBJECTIVE_NAMES[args.objective],
                args.num_inducing, args.alpha,
            )
            cmd_train(spec)
            return EXIT_OK
        if args.command == "compare":
            methods = [m.strip() for m in args.methods.split(",") if m.strip()]
            if not methods:
                raise UsageError("empty --methods list")
            unknown = [m for m in methods if m not in METHODS]
            if unknown:
                raise UsageError(f"unknown methods: {unknown}")
            m_values: list[Optional[int]] = [None]
            if args.num_inducing:
                m_values = [int(v) for v in str(args.num_inducing).split(",")]
            specs = []
            for name in methods:
                model, objective, alpha = METHODS[name]
                for m in (m_values if model == "sparse" else [None]):
                    if model == "sparse" and m is None:
                        raise UsageError(f"{name} needs --num-inducing")
                    specs.append(_spec_from_args(args, model, objective, m, alpha))
            cmd_compare(specs, args.out)
            return EXIT_OK
        if args.command == "discretization-sweep":
            cmd_discretization_sweep(
                [float(v) for v in args.L_set.split(",")],
                [int(v) for v in args.r_set.split(",")],
                n_train=args.n_train,
                n_test=args.n_test,
                d=args.dim,
                seed=args.seed,
                epsilon=args.epsilon,
                max_iters=args.max_iters,
                retrain_per_cell=args.retrain_per_cell,
                out_dir=args.out,
            )
            return EXIT_OK
        if args.command == "selfcheck":
            return cmd_selfcheck()
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        if isinstance(exc, (FileNotFoundError, IsADirectoryError, PermissionError)):
            print(f"i/o error: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, UsageError) else EXIT_NUMERIC
    except (CholeskyError, RuntimeError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
