"""End-to-end command-line workflows and exit codes."""

import csv
import json

import numpy as np
import pytest

from blockhazard.cli import cli


def run(args):
    return cli([str(a) for a in args])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """simulate -> fit -> predict -> evaluate on a tiny panel."""
    root = tmp_path_factory.mktemp("cliflow")
    assert run(["simulate", "--n", 40, "--t", 4, "--k", 2, "--seed", 3,
                "--out-dir", root]) == 0
    assert (root / "panel.csv").exists()
    assert (root / "theta_true.json").exists()
    assert run(["fit", "--panel", root / "panel.csv", "--max-iter", 60,
                "--out", root / "fit.json"]) == 0
    return root


def test_fit_output(workdir):
    payload = json.loads((workdir / "fit.json").read_text())
    assert payload["iterations"] <= 60
    assert len(payload["labels"]) == 4
    theta = np.array(payload["theta_hat"])
    assert theta.shape == (40, 4, 4)


def test_predict(workdir):
    assert run(["predict", "--fit", workdir / "fit.json", "--k", 2,
                "--out", workdir / "policy.csv"]) == 0
    with open(workdir / "policy.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 40 * 4
    assert sum(int(r["chosen"]) for r in rows) == 40


def test_evaluate_against_truth(workdir):
    out = workdir / "metrics.json"
    assert run(["evaluate", "--fit", workdir / "fit.json",
                "--truth", workdir / "theta_true.json",
                "--panel", workdir / "panel.csv", "--out", out]) == 0
    metrics = json.loads(out.read_text())
    for key in ("l2", "regret", "accuracy", "c_index", "average_auc"):
        assert key in metrics
    assert metrics["regret"] >= 0
    assert 0 <= metrics["accuracy"] <= 1
    assert 0 <= metrics["c_index"] <= 1


def test_evaluate_requires_inputs(workdir, capsys):
    assert run(["evaluate", "--fit", workdir / "fit.json",
                "--out", workdir / "unused.json"]) == 1
    assert "nothing to evaluate" in capsys.readouterr().err


def test_fit_invalid_panel_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("unit_id,x_1,a_1,delta,y_1,y_2\n0,0.5,1,1,0,1\n")
    assert run(["fit", "--panel", bad]) == 1
    assert "monotone" in capsys.readouterr().err


def test_fit_missing_panel_exit_code(tmp_path):
    assert run(["fit", "--panel", tmp_path / "nope.csv"]) == 1


def test_fit_bad_ranks(workdir, capsys):
    assert run(["fit", "--panel", workdir / "panel.csv", "--ranks", "1,1,9"]) == 1
    assert "exceed" in capsys.readouterr().err


def test_missing_config_file(workdir):
    assert run(["--config", "/nonexistent.ini", "simulate"]) == 1


def test_config_file_merging(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "[sim]\nn = 25\nt = 3\nseed = 9\n\n"
        "[fit]\nmax-iter = 15\nweight-source = uniform\n"
    )
    assert run(["--config", cfg, "simulate", "--out-dir", tmp_path]) == 0
    with open(tmp_path / "panel.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 25
    assert "y_3" in rows[0] and "y_4" not in rows[0]
    # CLI flag overrides the config value
    assert run(["--config", cfg, "fit", "--panel", tmp_path / "panel.csv",
                "--max-iter", 5, "--out", tmp_path / "fit.json"]) == 0
    payload = json.loads((tmp_path / "fit.json").read_text())
    assert payload["iterations"] <= 5


def test_bench_subcommand(tmp_path):
    assert run(["bench", "--n-values", "30,60", "--t", "3", "--k", "2",
                "--reps", "2", "--workers", "1", "--out-dir", tmp_path]) == 0
    with open(tmp_path / "convergence.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["N"]) for r in rows] == [30, 60]
    plot = json.loads((tmp_path / "convergence_plot.json").read_text())
    assert {s["name"] for s in plot["series"]} == {"l2_mean", "misclass_mean"}


def test_ablate_subcommand(tmp_path):
    assert run(["ablate", "--cells", "40,4,2", "--reps", "2", "--workers", "1",
                "--out-dir", tmp_path]) == 0
    with open(tmp_path / "ablation.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert "l2_group-w" in rows[0]
