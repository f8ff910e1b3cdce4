"""
CLI commands. Each returns a process exit code; errors become a one-line diagnostic.
"""
from __future__ import annotations

import logging
import sys
from dataclasses import asdict
from functools import wraps
from pathlib import Path
from typing import Callable

import numpy as np

from .run_manifest import METRICS_FILE, RunManifest, write_json
from src.data.cohort_io import cohort_fingerprint, read_cohort, write_cohort
from src.data.synthetic import load_synthetic_spec, make_synthetic_cohort
from src.survival.export import write_km_tsv
from src.survival.metrics import kaplan_meier, log_rank_test, stratify_by_median
from src.training.ablation import LADDER, AblationRow, ladder_config, write_ablation_tsv
from src.training.checkpoint import evaluate_checkpoint, load_checkpoint, save_fit_checkpoints
from src.training.config import load_train_config
from src.training.gradcheck import gradient_check, tiny_config
from src.training.trainer import run_cv
from src.util.errors import GradientCheckError, MurreNetError

logger = logging.getLogger(__name__)

FIT_RESULT_FILE = "fit_result.json"
EVAL_FILE = "eval.json"
KM_FILE = "km_curves.tsv"
STRATIFY_FILE = "stratification.json"
ABLATION_FILE = "ablation.tsv"


def report_error(error: MurreNetError) -> int:
    print(f"[murrenet] {type(error).__name__}: {error}", file=sys.stderr)
    return error.exit_code


def _command(func: Callable[..., None]) -> Callable[..., int]:
    """Run a command body and map MurreNet errors to their exit codes."""
    @wraps(func)
    def run(*args, **kwargs) -> int:
        try:
            func(*args, **kwargs)
        except MurreNetError as e:
            logger.debug("command %s failed", func.__name__, exc_info=True)
            return report_error(e)
        return 0

    return run


@_command
def cmd_synth(spec_file: Path | None, out_dir: Path) -> None:
    manifest = RunManifest(command="synth", config_path=str(spec_file) if spec_file else None)
    spec = load_synthetic_spec(spec_file)
    cohort = make_synthetic_cohort(spec)
    written = write_cohort(cohort, out_dir)

    manifest.config = {"synthetic": asdict(spec)}
    manifest.seed = spec.seed
    manifest.cohort_fingerprint = cohort_fingerprint(out_dir)
    manifest.add_outputs(out_dir, written)
    manifest.metrics = {"n_patients": len(cohort), "n_events": int(cohort.events().sum())}
    manifest.write(out_dir)
    print(f"wrote {len(cohort)} patients ({manifest.metrics['n_events']} events) to {out_dir}")


@_command
def cmd_train(
    config_file: Path | None,
    cohort_dir: Path,
    out_dir: Path,
    seed: int | None = None,
    jobs: int | None = None,
) -> None:
    manifest = RunManifest(command="train", config_path=str(config_file) if config_file else None)
    config = load_train_config(config_file, seed_override=seed, jobs_override=jobs)
    cohort = read_cohort(cohort_dir)
    manifest.cohort_fingerprint = cohort_fingerprint(cohort_dir)

    fit = run_cv(cohort, config)

    out_dir.mkdir(parents=True, exist_ok=True)
    written = [
        write_json(out_dir / FIT_RESULT_FILE, fit.to_dict()),
        write_json(out_dir / METRICS_FILE, fit.metric_summary()),
        *save_fit_checkpoints(out_dir, fit),
    ]
    manifest.config = config.to_sections()
    manifest.seed = config.seed
    manifest.metrics = fit.metric_summary()
    manifest.add_outputs(out_dir, written)
    manifest.write(out_dir)
    print(f"C-index: {fit.mean_c_index:.4f} ± {fit.std_c_index:.4f}")


@_command
def cmd_eval(checkpoint_file: Path, cohort_dir: Path, out_dir: Path) -> None:
    manifest = RunManifest(command="eval", config_path=str(checkpoint_file))
    checkpoint = load_checkpoint(checkpoint_file)
    cohort = read_cohort(cohort_dir)
    manifest.cohort_fingerprint = cohort_fingerprint(cohort_dir)

    risks, c_index = evaluate_checkpoint(checkpoint, cohort)
    metrics = {"c_index": c_index, "n_patients": len(cohort), "fold": checkpoint.fold}
    written = [
        write_json(out_dir / EVAL_FILE, {**metrics, "risks": dict(zip(cohort.patient_ids, risks.tolist()))}),
        write_json(out_dir / METRICS_FILE, metrics),
    ]
    manifest.config = checkpoint.config.to_sections()
    manifest.seed = checkpoint.config.seed
    manifest.metrics = metrics
    manifest.add_outputs(out_dir, written)
    manifest.write(out_dir)
    print(f"C-index: {c_index:.4f}")


@_command
def cmd_stratify(checkpoint_file: Path, cohort_dir: Path, out_dir: Path) -> None:
    manifest = RunManifest(command="stratify", config_path=str(checkpoint_file))
    checkpoint = load_checkpoint(checkpoint_file)
    cohort = read_cohort(cohort_dir)
    manifest.cohort_fingerprint = cohort_fingerprint(cohort_dir)

    risks, c_index = evaluate_checkpoint(checkpoint, cohort)
    groups = stratify_by_median(risks)
    times, events = cohort.times(), cohort.events()
    low_t, low_e = times[groups.low_idx], events[groups.low_idx]
    high_t, high_e = times[groups.high_idx], events[groups.high_idx]
    result = log_rank_test(low_t, low_e, high_t, high_e)

    out_dir.mkdir(parents=True, exist_ok=True)
    write_km_tsv(out_dir / KM_FILE, {"low": kaplan_meier(low_t, low_e), "high": kaplan_meier(high_t, high_e)})
    ids = np.array(cohort.patient_ids)
    metrics = {
        "c_index": c_index,
        "median_risk": groups.median,
        "n_low": int(groups.low_idx.size),
        "n_high": int(groups.high_idx.size),
        "chi2": result.chi2,
        "p_value": result.p_value,
    }
    written = [
        out_dir / KM_FILE,
        write_json(out_dir / STRATIFY_FILE, {
            **metrics,
            "low_ids": ids[groups.low_idx].tolist(),
            "high_ids": ids[groups.high_idx].tolist(),
        }),
        write_json(out_dir / METRICS_FILE, metrics),
    ]
    manifest.config = checkpoint.config.to_sections()
    manifest.seed = checkpoint.config.seed
    manifest.metrics = metrics
    manifest.add_outputs(out_dir, written)
    manifest.write(out_dir)
    print(f"log-rank chi2={result.chi2:.4f} p={result.p_value:.4g} (low n={metrics['n_low']}, high n={metrics['n_high']})")


@_command
def cmd_gradcheck(
    config_file: Path | None,
    seed: int | None = None,
    ladder: bool = False,
    max_entries: int | None = None,
) -> None:
    config = tiny_config(load_train_config(config_file, seed_override=seed))
    configs = [ladder_config(config, name) for name in LADDER] if ladder else [config]

    failures = []
    for rung in configs:
        report = gradient_check(rung, seed=rung.seed, max_entries=max_entries)
        print(f"model {report.model}: max relative error {report.max_rel_err:.3e}")
        for line in report.lines():
            print(f"  {line}")
        if not report.passed:
            failures.append(report)

    if failures:
        report = failures[0]
        worst = report.worst
        raise GradientCheckError(
            f"gradient check failed for model {report.model}: worst parameter {worst.name} "
            f"relative error {worst.max_rel_err:.3e}"
        )


@_command
def cmd_ablate(
    config_file: Path | None,
    cohort_dir: Path,
    out_dir: Path,
    seed: int | None = None,
    jobs: int | None = None,
) -> None:
    manifest = RunManifest(command="ablate", config_path=str(config_file) if config_file else None)
    config = load_train_config(config_file, seed_override=seed, jobs_override=jobs)
    cohort = read_cohort(cohort_dir)
    manifest.cohort_fingerprint = cohort_fingerprint(cohort_dir)

    rows = []
    for name in LADDER:
        fit = run_cv(cohort, ladder_config(config, name))
        rows.append(AblationRow.from_fit(fit))
        print(f"{name}: C-index {fit.mean_c_index:.4f} ± {fit.std_c_index:.4f}")

    out_dir.mkdir(parents=True, exist_ok=True)
    write_ablation_tsv(out_dir / ABLATION_FILE, rows)
    metrics = {r.model: {"mean_c_index": r.mean_c_index, "std_c_index": r.std_c_index} for r in rows}
    written = [out_dir / ABLATION_FILE, write_json(out_dir / METRICS_FILE, metrics)]
    manifest.config = config.to_sections()
    manifest.seed = config.seed
    manifest.metrics = metrics
    manifest.add_outputs(out_dir, written)
    manifest.write(out_dir)
