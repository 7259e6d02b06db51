"""Command-line surface: runs, emissions, schemas, exit codes."""

import json
import math
import os

import numpy as np
import pytest

from pacgp.bound import REPORT_SCHEMA
from pacgp.cli import (
    EXIT_IO,
    EXIT_OK,
    EXIT_USAGE,
    RunSpec,
    UsageError,
    load_model,
    main,
    resolve_dataset,
    run_single,
    save_model,
)
from pacgp.data import save_csv, sample_synthetic_gp
from pacgp.full_gp import full_predict
from pacgp.sparse_gp import sparse_predict


@pytest.fixture(scope="module")
def tiny_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "tiny.csv"
    train, _ = sample_synthetic_gp(120, 0, 2, seed=0, noise_sd=0.2)
    save_csv(train, path)
    return str(path)


def fast_flags(ds, out):
    return ["--dataset", ds, "--max-iters", "30", "--out", str(out),
            "--epsilon", "0.6", "--seed", "1"]


class TestResolveDataset:
    def test_builtins(self):
        assert resolve_dataset("demo1d").n == 200
        assert resolve_dataset("demo1d-half").n == 100

    def test_missing_path(self):
        with pytest.raises(FileNotFoundError):
            resolve_dataset("no-such-thing.csv")

    def test_csv_path(self, tiny_csv):
        ds = resolve_dataset(tiny_csv)
        assert ds.n == 120


class TestRunSpecValidation:
    def test_m_requires_sparse(self):
        with pytest.raises(UsageError):
            RunSpec(dataset="demo1d", model="full", n_inducing=8)

    def test_sparse_requires_m(self):
        with pytest.raises(UsageError):
            RunSpec(dataset="demo1d", model="sparse", objective="vfe")

    def test_objective_model_consistency(self):
        with pytest.raises(UsageError):
            RunSpec(dataset="demo1d", model="full", objective="vfe")


class TestCmdTrain:
    def test_full_run_emits_reports_and_models(self, tiny_csv, tmp_path):
        out = tmp_path / "run"
        rc = main(["train", *fast_flags(tiny_csv, out), "--model", "full",
                   "--objective", "pac-kl", "--repeats", "2"])
        assert rc == EXIT_OK
        reports = sorted(os.listdir(out))
        assert "aggregate.json" in reports
        assert "report_000.json" in reports and "report_001.json" in reports
        agg = json.loads((out / "aggregate.json").read_text())
        assert agg["n_repeats"] == 2
        assert 0 <= agg["b"]["mean"] <= 1

    def test_reports_validate_against_schema(self, tiny_csv, tmp_path):
        jsonschema = pytest.importorskip("jsonschema")
        out = tmp_path / "run"
        rc = main(["train", *fast_flags(tiny_csv, out), "--model", "sparse",
                   "--objective", "vfe", "--num-inducing", "8"])
        assert rc == EXIT_OK
        doc = json.loads((out / "report_000.json").read_text())
        jsonschema.validate(doc, REPORT_SCHEMA)

    def test_repeat_reproducibility(self, tiny_csv, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            rc = main(["train", *fast_flags(tiny_csv, out), "--model", "full",
                       "--objective", "mle"])
            assert rc == EXIT_OK
        r1 = json.loads((out1 / "report_000.json").read_text())
        r2 = json.loads((out2 / "report_000.json").read_text())
        r1["metadata"].pop("wall_time_s")
        r2["metadata"].pop("wall_time_s")
        assert r1 == r2

    def test_missing_dataset_is_io_error(self, tmp_path):
        rc = main(["train", "--dataset", "missing.csv", "--out", str(tmp_path)])
        assert rc == EXIT_IO

    def test_usage_error_exit_code(self, tiny_csv, tmp_path):
        rc = main(["train", "--dataset", tiny_csv, "--model", "sparse",
                   "--objective", "vfe", "--out", str(tmp_path)])
        assert rc == EXIT_USAGE


class TestModelFiles:
    def test_full_round_trip_bit_identical_predictions(self, tmp_path):
        spec = RunSpec(dataset="demo1d", model="full", objective="nll",
                       max_iters=20, out=None)
        report, state, _ = run_single(spec, 0)
        path = tmp_path / "model.json"
        save_model(state, path)
        back = load_model(path)
        grid = np.linspace(-2, 2, 20)[:, None]
        a, b = full_predict(state, grid), full_predict(back, grid)
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.var, b.var)

    def test_sparse_round_trip(self, tmp_path):
        spec = RunSpec(dataset="demo1d", model="sparse", objective="pac_kl",
                       n_inducing=6, max_iters=20, out=None)
        report, state, _ = run_single(spec, 0)
        path = tmp_path / "model.json"
        save_model(state, path)
        back = load_model(path)
        grid = np.linspace(-2, 2, 20)[:, None]
        a, b = sparse_predict(state, grid), sparse_predict(back, grid)
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.var, b.var)


class TestCompare:
    def test_empty_methods_is_usage_error(self, tiny_csv, tmp_path):
        rc = main(["compare", "--dataset", tiny_csv, "--methods", "",
                   "--out", str(tmp_path)])
        assert rc == EXIT_USAGE

    def test_unknown_method(self, tiny_csv, tmp_path):
        rc = main(["compare", "--dataset", tiny_csv, "--methods", "nonsense",
                   "--out", str(tmp_path)])
        assert rc == EXIT_USAGE

    def test_comparison_table(self, tiny_csv, tmp_path):
        out = tmp_path / "cmp"
        rc = main(["compare", "--dataset", tiny_csv, "--max-iters", "30",
                   "--methods", "kl-pac-gp,full-gp", "--out", str(out),
                   "--seed", "2"])
        assert rc == EXIT_OK
        rows = json.loads((out / "comparison.json").read_text())
        assert {r["method"] for r in rows} == {"kl-pac-gp", "full-gp"}
        assert (out / "comparison.csv").exists()

    def test_sparse_m_sweep_rows(self, tiny_csv, tmp_path):
        out = tmp_path / "cmp"
        rc = main(["compare", "--dataset", tiny_csv, "--max-iters", "20",
                   "--methods", "vfe", "--num-inducing", "4,8",
                   "--out", str(out)])
        assert rc == EXIT_OK
        rows = json.loads((out / "comparison.json").read_text())
        assert [r["m"] for r in rows] == [4, 8]


class TestDiscretizationSweep:
    def test_sweep_emits_rows(self, tmp_path):
        from pacgp.cli import cmd_discretization_sweep

        rows = cmd_discretization_sweep(
            [6.0], [1, 2], n_train=150, n_test=100, d=2, seed=0,
            max_iters=40, out_dir=str(tmp_path),
        )
        assert len(rows) == 2
        assert rows[0]["ln_theta_card"] == pytest.approx(3 * math.log(121))
        assert rows[1]["ln_theta_card"] == pytest.approx(3 * math.log(1201))
        for row in rows:
            assert abs(row["gibbs_train_post"] - row["gibbs_train_pre"]) < 0.05
        assert (tmp_path / "discretization_sweep.csv").exists()


class TestSelfcheckCommand:
    @pytest.mark.slow
    def test_selfcheck_passes(self):
        assert main(["selfcheck"]) == EXIT_OK
