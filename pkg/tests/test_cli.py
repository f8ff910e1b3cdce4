from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

import src.training.gradcheck as gradcheck
from src.app.main import run
from src.app.run_manifest import MANIFEST_FILE, METRICS_FILE
from src.data.cohort_io import cohort_fingerprint, read_cohort
from src.survival.export import read_km_tsv
from tests.conftest import rewrite_manifest_cell

RUN_CONFIG = """
[train]
epochs = 1
n_splits = 2
lr = 1e-3

[model]
d = 8
n_heads = 2
n_landmarks = 8
gate_hidden = 4
"""

SYNTH_SPEC = """
[synthetic]
n_patients = 30
n_p_min = 2
n_p_max = 5
d_in_p = 6
d_in_g = 5
n_groups = 4
seed = 3
"""


@pytest.fixture
def run_config(tmp_path: Path) -> Path:
    path = tmp_path / "run.toml"
    path.write_text(RUN_CONFIG, encoding="utf-8")
    return path


@pytest.fixture
def trained(tmp_path: Path, run_config: Path, cohort_dir: Path) -> Path:
    out = tmp_path / "train"
    assert run(["train", "--config", str(run_config), "--cohort", str(cohort_dir), "--out", str(out), "--seed", "0"]) == 0
    return out


def read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_synth_writes_a_readable_cohort(tmp_path, capsys):
    spec = tmp_path / "spec.toml"
    spec.write_text(SYNTH_SPEC, encoding="utf-8")
    out = tmp_path / "cohort"
    assert run(["synth", "--spec", str(spec), "--out", str(out)]) == 0
    assert "wrote 30 patients" in capsys.readouterr().out
    cohort = read_cohort(out)
    assert len(cohort) == 30 and cohort.d_in_p == 6
    manifest = read_json(out / MANIFEST_FILE)
    assert manifest["command"] == "synth"
    assert manifest["cohort_fingerprint"] == cohort_fingerprint(out)
    assert "manifest.tsv" in manifest["outputs"]


def test_train_outputs(capsys, trained, cohort_dir):
    assert "C-index:" in capsys.readouterr().out
    metrics = read_json(trained / METRICS_FILE)
    assert metrics["model"] == "F" and metrics["n_splits"] == 2
    assert len(metrics["fold_c_index"]) == 2

    manifest = read_json(trained / MANIFEST_FILE)
    assert manifest["cohort_fingerprint"] == cohort_fingerprint(cohort_dir)
    assert manifest["seed"] == 0
    assert {"metrics.json", "fit_result.json", "checkpoints/fold_0.pt", "checkpoints/fold_1.pt"} <= set(manifest["outputs"])
    assert manifest["config"]["model"]["d"] == 8

    fit = read_json(trained / "fit_result.json")
    assert [f["fold"] for f in fit["folds"]] == [0, 1]
    assert len(fit["folds"][0]["loss_trace"]["epoch_means"]) == 1


def test_metrics_are_byte_identical_across_runs(tmp_path, run_config, cohort_dir, trained):
    again = tmp_path / "again"
    assert run(["train", "--config", str(run_config), "--cohort", str(cohort_dir), "--out", str(again), "--seed", "0"]) == 0
    assert (again / METRICS_FILE).read_bytes() == (trained / METRICS_FILE).read_bytes()


def test_eval_checkpoint(capsys, tmp_path, trained, cohort_dir):
    out = tmp_path / "eval"
    assert run(["eval", "--checkpoint", str(trained / "checkpoints" / "fold_0.pt"), "--cohort", str(cohort_dir), "--out", str(out)]) == 0
    assert "C-index:" in capsys.readouterr().out
    result = read_json(out / "eval.json")
    assert 0.0 <= result["c_index"] <= 1.0
    assert len(result["risks"]) == 30


def test_stratify_checkpoint(capsys, tmp_path, trained, cohort_dir):
    out = tmp_path / "stratify"
    assert run(["stratify", "--checkpoint", str(trained / "checkpoints" / "fold_0.pt"), "--cohort", str(cohort_dir), "--out", str(out)]) == 0
    assert "log-rank chi2=" in capsys.readouterr().out
    result = read_json(out / "stratification.json")
    assert result["n_low"] + result["n_high"] == 30
    assert not set(result["low_ids"]) & set(result["high_ids"])
    assert 0.0 <= result["p_value"] <= 1.0
    curves = read_km_tsv(out / "km_curves.tsv")
    assert list(curves) == ["low", "high"]
    assert np.all(np.diff(curves["low"].survival_probs) <= 0)


def test_degenerate_stratification_exit_code(capsys, tmp_path, trained, cohort_dir, monkeypatch):
    monkeypatch.setattr("src.app.commands.evaluate_checkpoint", lambda checkpoint, cohort: (np.full(len(cohort), 0.3), 0.5))
    out = tmp_path / "stratify"
    assert run(["stratify", "--checkpoint", str(trained / "checkpoints" / "fold_0.pt"), "--cohort", str(cohort_dir), "--out", str(out)]) == 4
    assert "degenerate stratification" in capsys.readouterr().err


def test_missing_manifest_exit_code(tmp_path, run_config, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run(["train", "--config", str(run_config), "--cohort", str(empty), "--out", str(tmp_path / "out")]) == 2
    err = capsys.readouterr().err
    assert "[murrenet] CohortDataError" in err and "manifest.tsv" in err


def test_bad_manifest_cell_exit_code(tmp_path, run_config, cohort_dir, capsys):
    rewrite_manifest_cell(cohort_dir, "event_observed", "")
    assert run(["train", "--config", str(run_config), "--cohort", str(cohort_dir), "--out", str(tmp_path / "out")]) == 2
    assert "event_observed is not a number" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, cohort_dir, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('[loss]\nalpha = "big"\n', encoding="utf-8")
    assert run(["train", "--config", str(bad), "--cohort", str(cohort_dir), "--out", str(tmp_path / "out")]) == 1
    assert "loss.alpha" in capsys.readouterr().err


def test_missing_checkpoint_exit_code(tmp_path, cohort_dir):
    assert run(["eval", "--checkpoint", str(tmp_path / "none.pt"), "--cohort", str(cohort_dir), "--out", str(tmp_path / "out")]) == 2


def test_gradcheck_passes(run_config, capsys):
    assert run(["gradcheck", "--config", str(run_config), "--max-entries", "3"]) == 0
    assert "model F: max relative error" in capsys.readouterr().out


def test_gradcheck_ladder(run_config, capsys):
    assert run(["gradcheck", "--config", str(run_config), "--ladder", "--max-entries", "2"]) == 0
    out = capsys.readouterr().out
    assert all(f"model {name}:" in out for name in "ABCDEF")


def test_corrupted_backward_exit_code(run_config, monkeypatch, capsys):
    real = gradcheck._analytic_gradients

    def corrupted(model, loss_fn):
        grads = real(model, loss_fn)
        return {name: grad * 2.0 + 1e-2 for name, grad in grads.items()}

    monkeypatch.setattr(gradcheck, "_analytic_gradients", corrupted)
    assert run(["gradcheck", "--config", str(run_config), "--max-entries", "2"]) == 5
    err = capsys.readouterr().err
    assert "GradientCheckError" in err and "worst parameter" in err


def test_ablate_writes_table(tmp_path, run_config, cohort_dir):
    out = tmp_path / "ablate"
    assert run(["ablate", "--config", str(run_config), "--cohort", str(cohort_dir), "--out", str(out)]) == 0
    table = (out / "ablation.tsv").read_text(encoding="utf-8").splitlines()
    assert table[0].split("\t")[0] == "model"
    assert [row.split("\t")[0] for row in table[1:]] == list("ABCDEF")
    assert set(read_json(out / METRICS_FILE)) == set("ABCDEF")


def test_unknown_command_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        run(["fly"])
    assert info.value.code == 2
