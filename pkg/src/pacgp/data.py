"""Dataset ingestion, standardization, splitting, and synthetic GP data.

All randomness flows through explicit seeds; no global RNG state is touched.
Standardization statistics are computed on the training split only by
default (the conservative, leakage-free convention) and are carried on the
returned datasets so the transformation can be inverted exactly.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from typing import Optional

import numpy as np

__all__ = [
    "Dataset",
    "load_csv",
    "save_csv",
    "split_and_standardize",
    "inverse_standardize",
    "sample_synthetic_gp",
    "demo_1d",
]

_DEMO_SEED = 20180406
_DEMO_NOISE_SD = 0.28
_DEMO_LENGTHSCALE = 0.6


@dataclasses.dataclass
class Dataset:
    """An in-memory regression dataset with optional normalization statistics."""

    X: np.ndarray
    y: np.ndarray
    name: str = "dataset"
    feature_means: Optional[np.ndarray] = None
    feature_sds: Optional[np.ndarray] = None
    target_mean: Optional[float] = None
    target_sd: Optional[float] = None
    metadata: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self) -> None:
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] != self.y.size:
            raise ValueError("X and y disagree on the number of rows")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset contains NaN or Inf")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def manifest(self) -> dict:
        """Summary embedded in every certificate report."""
        out = {
            "dataset": self.name,
            "n": int(self.n),
            "d": int(self.d),
            "standardized": self.feature_means is not None,
        }
        out.update({k: v for k, v in self.metadata.items()
                    if isinstance(v, (str, int, float, bool))})
        return out


def load_csv(path, target_column=None) -> Dataset:
    """Load a numeric CSV; header row auto-detected by a non-numeric first line.

    target_column selects the target by index or (with a header) by name;
    default is the last column.  Parse failures report the 1-based (row,
    column) location.
    """
    with open(path, "r", newline="") as fh:
        raw = [line.rstrip("\n\r") for line in fh]
    rows = [line.split(",") for line in raw if line.strip() != ""]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header: Optional[list[str]] = None

    def _is_number(tok: str) -> bool:
        try:
            float(tok)
            return True
        except ValueError:
            return False

    if not all(_is_number(tok) for tok in rows[0]):
        header = [tok.strip() for tok in rows[0]]
        rows = rows[1:]
        if not rows:
            raise ValueError(f"{path}: header but no data rows")
    width = len(rows[0])
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"{path}: row {i + 1 + (header is not None)} has "
                             f"{len(row)} fields, expected {width}")
        for j, tok in enumerate(row):
            tok = tok.strip()
            if tok == "" or not _is_number(tok):
                raise ValueError(
                    f"{path}: non-numeric value {tok!r} at row "
                    f"{i + 1 + (header is not None)}, column {j + 1}"
                )
            data[i, j] = float(tok)
    if target_column is None:
        t_idx = width - 1
    elif isinstance(target_column, int):
        t_idx = target_column if target_column >= 0 else width + target_column
    else:
        if header is None:
            raise ValueError("named target column requires a header row")
        if target_column not in header:
            raise ValueError(f"target column {target_column!r} not in header {header}")
        t_idx = header.index(target_column)
    if not (0 <= t_idx < width):
        raise ValueError(f"target column index {t_idx} out of range")
    mask = np.ones(width, dtype=bool)
    mask[t_idx] = False
    import os

    return Dataset(data[:, mask], data[:, t_idx],
                   name=os.path.splitext(os.path.basename(str(path)))[0])


def save_csv(ds: Dataset, path) -> None:
    """Write a dataset as CSV (features then target), full double precision."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join([f"x{j}" for j in range(ds.d)] + ["y"]) + "\n")
        for i in range(ds.n):
            cells = [repr(float(v)) for v in ds.X[i]] + [repr(float(ds.y[i]))]
            fh.write(",".join(cells) + "\n")


def _standardize_pair(train: Dataset, test: Dataset, stats_from: Dataset,
                      name: str) -> tuple[Dataset, Dataset]:
    mu = stats_from.X.mean(axis=0)
    sd = stats_from.X.std(axis=0)
    keep = sd > 0.0
    if not np.all(keep):
        dropped = np.flatnonzero(~keep).tolist()
        warnings.warn(f"dropping constant feature columns {dropped}", RuntimeWarning)
    y_mu = float(stats_from.y.mean())
    y_sd = float(stats_from.y.std())
    if y_sd == 0.0:
        raise ValueError("target is constant; cannot standardize")

    def apply(ds: Dataset, tag: str) -> Dataset:
        return Dataset(
            (ds.X[:, keep] - mu[keep]) / sd[keep],
            (ds.y - y_mu) / y_sd,
            name=f"{name}[{tag}]",
            feature_means=mu[keep].copy(),
            feature_sds=sd[keep].copy(),
            target_mean=y_mu,
            target_sd=y_sd,
            metadata=dict(ds.metadata),
        )

    return apply(train, "train"), apply(test, "test")


def split_and_standardize(
    ds: Dataset,
    train_fraction: float = 0.8,
    seed: int = 0,
    stats_scope: str = "train",
) -> tuple[Dataset, Dataset]:
    """Seeded shuffle-split, then standardization of features and target.

    stats_scope selects where the normalization statistics come from:
    "train" (default; the held-out split never influences them) or "all"
    (statistics from the full dataset before splitting).
    """
    if ds.n < 2:
        raise ValueError("need at least two rows to split")
    if stats_scope not in ("train", "all"):
        raise ValueError("stats_scope must be 'train' or 'all'")
    n_train = int(train_fraction * ds.n)
    if not (1 <= n_train <= ds.n - 1):
        raise ValueError(f"degenerate split: n_train={n_train} of {ds.n}")
    perm = np.random.default_rng(seed).permutation(ds.n)
    tr_idx, te_idx = perm[:n_train], perm[n_train:]
    meta = dict(ds.metadata, split_seed=seed, train_fraction=train_fraction,
                stats_scope=stats_scope)
    train = Dataset(ds.X[tr_idx], ds.y[tr_idx], name=ds.name, metadata=meta)
    test = Dataset(ds.X[te_idx], ds.y[te_idx], name=ds.name, metadata=meta)
    stats_from = train if stats_scope == "train" else ds
    return _standardize_pair(train, test, stats_from, ds.name)


def inverse_standardize(ds: Dataset) -> Dataset:
    """Undo the affine normalization carried by a standardized dataset."""
    if ds.feature_means is None:
        raise ValueError("dataset carries no normalization statistics")
    return Dataset(
        ds.X * ds.feature_sds + ds.feature_means,
        ds.y * ds.target_sd + ds.target_mean,
        name=ds.name + "[raw]",
        metadata=dict(ds.metadata),
    )


def _gp_gram(X: np.ndarray, ls: np.ndarray, signal_variance: float) -> np.ndarray:
    Xs = X / ls
    sq = ((Xs**2).sum(axis=1)[:, None] - 2.0 * Xs @ Xs.T
          + (Xs**2).sum(axis=1)[None, :])
    return signal_variance * np.exp(-0.5 * np.clip(sq, 0.0, None))


def _gp_cross(A: np.ndarray, B: np.ndarray, ls: np.ndarray,
              signal_variance: float) -> np.ndarray:
    As, Bs = A / ls, B / ls
    sq = ((As**2).sum(axis=1)[:, None] - 2.0 * As @ Bs.T
          + (Bs**2).sum(axis=1)[None, :])
    return signal_variance * np.exp(-0.5 * np.clip(sq, 0.0, None))


def sample_synthetic_gp(
    n_train: int,
    n_test: int,
    d: int,
    seed: int = 0,
    log_lengthscales: Optional[np.ndarray] = None,
    signal_variance: float = 1.0,
    noise_sd: float = 0.0,
    block_size: Optional[int] = 4096,
    memory_budget_gb: float = 2.0,
) -> tuple[Dataset, Dataset]:
    """Draw a regression problem from a known SE-ARD GP on [-3, 3]^d.

    Per-dimension log-lengthscales ln(l_k) default to U[-1, 1] draws and are
    recorded in the metadata.  The training outputs are one exact joint GP
    draw; test outputs are drawn from the GP conditioned on the training
    latents, in blocks of `block_size` (test blocks are conditionally
    independent given the training block, which caps memory at
    O((n_train + block_size)^2) while leaving every per-point law exact).
    With block_size=None the full joint is sampled, guarded by
    memory_budget_gb.
    """
    if n_train < 1 or n_test < 0:
        raise ValueError("need n_train >= 1 and n_test >= 0")
    rng = np.random.default_rng(seed)
    if log_lengthscales is None:
        log_ls = rng.uniform(-1.0, 1.0, size=d)
    else:
        log_ls = np.asarray(log_lengthscales, dtype=float)
        if log_ls.shape != (d,):
            raise ValueError("log_lengthscales must have shape (d,)")
    ls = np.exp(log_ls)
    total = n_train + n_test
    if block_size is None and (total**2) * 8 > memory_budget_gb * 2**30:
        raise MemoryError(
            f"joint sampling of {total} points needs "
            f"{total**2 * 8 / 2**30:.1f} GiB; pass a block_size"
        )
    X_tr = rng.uniform(-3.0, 3.0, size=(n_train, d))
    X_te = rng.uniform(-3.0, 3.0, size=(n_test, d))
    jitter = 1e-10 * signal_variance

    K_tt = _gp_gram(X_tr, ls, signal_variance) + jitter * np.eye(n_train)
    L = np.linalg.cholesky(K_tt)
    f_tr = L @ rng.standard_normal(n_train)

    if block_size is None:
        X_all = np.vstack([X_tr, X_te])
        K = _gp_gram(X_all, ls, signal_variance) + jitter * np.eye(total)
        L_all = np.linalg.cholesky(K)
        z = rng.standard_normal(total)
        f_all = L_all @ z
        f_tr, f_te = f_all[:n_train], f_all[n_train:]
    else:
        alpha = np.linalg.solve(K_tt, f_tr)
        f_te = np.empty(n_test)
        for lo in range(0, n_test, block_size):
            hi = min(lo + block_size, n_test)
            Xb = X_te[lo:hi]
            K_bt = _gp_cross(Xb, X_tr, ls, signal_variance)
            mean_b = K_bt @ alpha
            K_bb = _gp_gram(Xb, ls, signal_variance)
            cov_b = K_bb - K_bt @ np.linalg.solve(K_tt, K_bt.T)
            cov_b[np.diag_indices_from(cov_b)] += jitter
            L_b = np.linalg.cholesky(cov_b)
            f_te[lo:hi] = mean_b + L_b @ rng.standard_normal(hi - lo)

    y_tr = f_tr + noise_sd * rng.standard_normal(n_train)
    y_te = f_te + noise_sd * rng.standard_normal(n_test)
    meta = {
        "generator": "se_ard_gp",
        "seed": seed,
        "true_log_lengthscales": log_ls.tolist(),
        "signal_variance": signal_variance,
        "noise_sd": noise_sd,
        "synthetic": True,
    }
    return (
        Dataset(X_tr, y_tr, name="synthetic-gp", metadata=dict(meta)),
        Dataset(X_te, y_te, name="synthetic-gp", metadata=dict(meta)),
    )


def demo_1d(half: bool = False) -> Dataset:
    """The bundled 1-d demonstration dataset (200 x 1), sorted by input.

    A fixed-seed synthetic stand-in for the classic 1-d sparse-GP demo set
    (which cannot be redistributed here): 200 inputs on [0, 6] with a
    density gap, outputs drawn from a unit-variance SE GP (lengthscale 0.6)
    plus observation noise of standard deviation 0.28.  The half-density
    variant keeps every second point of the sorted sequence.
    """
    rng = np.random.default_rng(_DEMO_SEED)
    n = 200
    seg = rng.choice(3, size=n, p=[0.48, 0.06, 0.46])
    lows = np.array([0.0, 2.7, 3.6])
    highs = np.array([2.7, 3.6, 6.0])
    x = rng.uniform(lows[seg], highs[seg])
    x.sort()
    X = x[:, None]
    K = _gp_gram(X, np.array([_DEMO_LENGTHSCALE]), 1.0) + 1e-10 * np.eye(n)
    f = np.linalg.cholesky(K) @ rng.standard_normal(n)
    y = f + _DEMO_NOISE_SD * rng.standard_normal(n)
    meta = {
        "synthetic": True,
        "generator": "demo_1d",
        "noise_sd": _DEMO_NOISE_SD,
        "lengthscale": _DEMO_LENGTHSCALE,
        "seed": _DEMO_SEED,
    }
    if half:
        return Dataset(X[::2], y[::2], name="demo1d-half", metadata=meta)
    return Dataset(X, y, name="demo1d", metadata=meta)
