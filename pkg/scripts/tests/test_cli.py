import filecmp

import numpy as np
import pytest

from src.cli import dispatch, load_config
from src.utils.io import MANIFEST_FILE, csv_manifest_digest, read_csv, read_csv_columns, read_json

SMALL = ["--hurst", "0.7", "--theta", "1", "--alpha", "1", "--horizon", "5", "--steps", "100"]


def _run(*argv):
    return dispatch([str(a) for a in argv])


def test_hurst_half_is_rejected(tmp_path, capsys):
    assert _run("kernel", "--hurst", "0.5", "--out", tmp_path) == 1
    assert "H must differ from 1/2" in capsys.readouterr().err


def test_usage_errors():
    assert _run("kernel", "--no-such-flag") == 2
    assert _run("no-such-command") == 2
    assert _run("simulate", "--input", "sinusoid") == 2


def test_load_config_overrides():
    cfg = load_config("mc-study", {"reps": 10, "hurst": 0.3})
    assert cfg.reps == 10
    assert cfg._target_ == "src.agent.mc_study.McStudyAgent"
    assert "H0.3_" in cfg.log_dir


def test_kernel(tmp_path):
    assert _run("kernel", *SMALL, "--out", tmp_path) == 0
    cols = read_csv_columns(str(tmp_path / "kernel.csv"), ("t", "psi", "m_prime"))
    np.testing.assert_allclose(cols["psi"] * cols["m_prime"], 1.0, rtol=1e-12)


def test_fisher(tmp_path):
    assert _run("fisher", *SMALL, "--input", "optimal", "--out", tmp_path) == 0
    row = read_csv(str(tmp_path / "fisher.csv"))[0]
    assert float(row["asymptotic"]) == 1.5
    assert float(row["total"]) == pytest.approx(float(row["i1"]) + float(row["i2"]))
    manifest = read_json(str(tmp_path / MANIFEST_FILE))
    assert manifest["command"] == "fisher"
    assert csv_manifest_digest(str(tmp_path / "fisher.csv")) == manifest["digest"]


def test_json_matches_csv(tmp_path):
    assert _run("fisher", *SMALL, "--out", tmp_path / "csv") == 0
    assert _run("fisher", *SMALL, "--out", tmp_path / "json", "--format", "json") == 0
    from_csv = read_csv(str(tmp_path / "csv" / "fisher.csv"))[0]
    from_json = read_json(str(tmp_path / "json" / "fisher.json"))["rows"][0]
    for key in ("i1", "i2", "total", "rate"):
        assert float(from_csv[key]) == from_json[key]


def test_simulate_then_estimate(tmp_path):
    paths = tmp_path / "paths"
    assert _run("simulate", *SMALL, "--reps", 3, "--seed", 11, "--out", paths) == 0
    assert len(read_csv(str(paths / "paths_index.csv"))) == 3
    assert _run("estimate", *SMALL, "--seed", 11, "--paths", paths, "--out", tmp_path / "est") == 0
    rows = read_csv(str(tmp_path / "est" / "estimates.csv"))
    assert len(rows) == 3
    assert all(np.isfinite(float(r["theta_hat"])) for r in rows)
    assert {r["regime"] for r in rows} == {"constant"}


def test_estimate_without_paths(tmp_path, capsys):
    assert _run("estimate", *SMALL, "--out", tmp_path) == 1
    assert "run simulate first" in capsys.readouterr().err


def test_estimate_grid_mismatch(tmp_path):
    paths = tmp_path / "paths"
    assert _run("simulate", *SMALL, "--reps", 1, "--out", paths) == 0
    argv = ["--hurst", "0.7", "--horizon", "5", "--steps", "50"]
    assert _run("estimate", *argv, "--paths", paths, "--out", tmp_path / "est") == 1


def test_simulate_is_reproducible(tmp_path):
    for name in ("a", "b"):
        assert _run("simulate", *SMALL, "--reps", 2, "--seed", 5, "--out", tmp_path / name) == 0
    for name in ("paths_0000.csv", "paths_0001.csv", "paths_index.csv"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)


def test_design_input_feeds_simulate(tmp_path):
    assert _run("design-input", *SMALL, "--out", tmp_path / "design") == 0
    table = tmp_path / "design" / "design_input.csv"
    assert _run("simulate", *SMALL, "--input", f"file:{table}", "--reps", 1, "--out", tmp_path / "sim") == 0
    assert (tmp_path / "sim" / "paths_0000.csv").exists()


def test_mc_study_then_plot(tmp_path):
    run_dir = tmp_path / "mc"
    assert _run("mc-study", *SMALL, "--reps", 60, "--seed", 3, "--out", run_dir) == 0
    summary = read_csv(str(run_dir / "summary.csv"))[0]
    assert int(summary["n_reps"]) == 60
    assert float(summary["target_variance"]) == 2.0
    assert _run("plot", "--out", run_dir) == 0
    assert (run_dir / "error_histogram.svg").exists()


def test_mc_study_json_then_plot(tmp_path):
    run_dir = tmp_path / "mc"
    assert _run("mc-study", *SMALL, "--reps", 60, "--seed", 3, "--out", run_dir, "--format", "json") == 0
    assert not (run_dir / "summary.csv").exists()
    summary = read_json(str(run_dir / "summary.json"))["rows"][0]
    assert summary["target_variance"] == 2.0
    assert _run("plot", "--out", run_dir) == 0
    assert (run_dir / "error_histogram.svg").exists()


def test_plot_on_empty_dir(tmp_path):
    assert _run("plot", "--out", tmp_path) == 1


def test_laplace(tmp_path):
    assert _run("laplace", *SMALL, "--input", "optimal", "--out", tmp_path) == 0
    rows = read_csv(str(tmp_path / "laplace.csv"))
    assert {r["quantity"] for r in rows} == {"gamma_z", "rate", "psi_vs_eigen"}
    gamma = [float(r["value"]) for r in rows if r["quantity"] == "gamma_z"]
    assert all(b < a for a, b in zip(gamma, gamma[1:]))
    assert _run("plot", "--out", tmp_path) == 0
    assert (tmp_path / "laplace.svg").exists()
