import json

import numpy as np
import pytest

from countcopula import cli, results
from countcopula.data import ingest_csv


def run(argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One simulated dataset plus a small-model config shared by CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    assert run(["simulate", "--out-dir", root / "sim", "--seed", 3,
                "--years", 1, "--missing-rate", 0.05]) == 0
    cfg = root / "config.json"
    cfg.write_text(json.dumps({"num_coef": 4, "n_freq": 1}))
    return root, root / "sim" / "data.csv", cfg


@pytest.fixture(scope="module")
def fitted_dir(workspace):
    root, data, cfg = workspace
    assert run(["fit", "--input", data, "--config", cfg,
                "--out-dir", root / "fit", "--lambda", "both",
                "--likelihood", "discrete"]) == 0
    return root / "fit"


class TestSimulate:
    def test_outputs(self, workspace):
        root, data, _ = workspace
        doc = results.load_document(root / "sim" / "simulate.json")
        assert doc["command"] == "simulate"
        assert doc["seed"] == 3
        table = ingest_csv(data, ["grebe", "cormorant", "goosander"])
        assert table.n_rows == doc["n_rows"]

    def test_byte_identical_rerun(self, workspace, tmp_path):
        root, _, _ = workspace
        assert run(["simulate", "--out-dir", tmp_path / "again", "--seed", 3,
                    "--years", 1, "--missing-rate", 0.05]) == 0
        for name in ("data.csv", "simulate.json"):
            a = (root / "sim" / name).read_bytes()
            b = (tmp_path / "again" / name).read_bytes()
            assert a == b, name


class TestFit:
    def test_document_and_plots(self, fitted_dir):
        doc = results.load_document(fitted_dir / "fit.json")
        assert set(doc["fits"]) == {"constant", "covariate"}
        assert doc["lr_test"]["df"] == 6
        assert doc["lr_test"]["p_value"] <= 1.0
        for mode in ("constant", "covariate"):
            assert (fitted_dir / f"marginal_quantiles_{mode}.csv").exists()
            assert (fitted_dir / f"marginal_quantiles_{mode}.png").exists()
            assert (fitted_dir / f"spearman_trajectory_{mode}.csv").exists()
        dep = doc["dependence"]["constant"]
        assert len(dep["pairs"]) == 3
        lo, hi = dep["pairs"][0]["spearman_ci"]
        assert lo < dep["pairs"][0]["spearman"] < hi

    def test_single_mode_fit(self, workspace, tmp_path):
        _, data, cfg = workspace
        assert run(["fit", "--input", data, "--config", cfg,
                    "--out-dir", tmp_path / "single", "--lambda", "constant"]) == 0
        doc = results.load_document(tmp_path / "single" / "fit.json")
        assert set(doc["fits"]) == {"constant"}
        assert "lr_test" not in doc

    def test_missing_input_fails_cleanly(self, workspace, tmp_path, capsys):
        root, _, cfg = workspace
        code = run(["fit", "--input", root / "nope.csv", "--config", cfg,
                    "--out-dir", tmp_path / "x"])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_config_key_fails(self, workspace, tmp_path, capsys):
        root, data, _ = workspace
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"knob": 1}))
        assert run(["fit", "--input", data, "--config", bad,
                    "--out-dir", tmp_path / "y"]) == 1
        assert "unknown config keys" in capsys.readouterr().err


class TestPredict:
    def test_from_saved_fit(self, workspace, fitted_dir, tmp_path):
        assert run(["predict", "--fit", fitted_dir / "fit.json",
                    "--out-dir", tmp_path / "pred", "--model-mode", "constant"]) == 0
        doc = results.load_document(tmp_path / "pred" / "predict.json")
        assert doc["model_mode"] == "constant"
        assert set(doc["clamped_tail_mass"]) == {"grebe", "cormorant", "goosander"}
        assert (tmp_path / "pred" / "marginal_quantiles.csv").exists()

    def test_unknown_mode_rejected(self, fitted_dir, tmp_path):
        code = run(["predict", "--fit", fitted_dir / "fit.json",
                    "--out-dir", tmp_path / "p2", "--year", 1990])
        assert code == 1


class TestBootstrap:
    def test_runs_and_documents(self, workspace, fitted_dir, tmp_path):
        _, data, cfg = workspace
        out = tmp_path / "boot"
        assert run(["bootstrap", "--fit", fitted_dir / "fit.json", "--input", data,
                    "--config", cfg, "--out-dir", out,
                    "--replicates", 2, "--seed", 1, "--model-mode", "constant"]) == 0
        doc = results.load_document(out / "bootstrap.json")
        assert doc["replicates"] == 2
        assert doc["completed"] + len(doc["failures"]) == 2
        assert (out / "bootstrap_spearman.csv").exists()


class TestPermuteCheck:
    def test_report_written(self, workspace, tmp_path):
        _, data, cfg = workspace
        out = tmp_path / "perm"
        assert run(["permute-check", "--input", data, "--config", cfg,
                    "--out-dir", out]) == 0
        doc = results.load_document(out / "permute_check.json")
        assert len(doc["orderings"]) == 6
        assert doc["max_spearman_discrepancy"] >= 0
        assert isinstance(doc["flagged"], bool)


class TestCompareApprox:
    def test_scatter_document(self, workspace, tmp_path):
        _, data, cfg = workspace
        out = tmp_path / "cmp"
        assert run(["compare-approx", "--input", data, "--config", cfg,
                    "--out-dir", out, "--replicates", 2, "--seed", 0]) == 0
        doc = results.load_document(out / "compare_approx.json")
        kinds = {row[0] for row in doc["rows"]}
        assert kinds == {"continuous", "discrete"}
        assert (out / "approximation_scatter.csv").exists()


class TestThreadEnvVar:
    def test_sets_blas_limits(self, monkeypatch):
        import os

        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            monkeypatch.delenv(var, raising=False)
        monkeypatch.setenv("COUNTCOPULA_THREADS", "1")
        cli._limit_threads()
        assert os.environ["OMP_NUM_THREADS"] == "1"
        assert os.environ["OPENBLAS_NUM_THREADS"] == "1"
