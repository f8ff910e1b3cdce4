"""
Per-fold optimisation and Monte-Carlo cross-validation.
"""
from __future__ import annotations

import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import torch

from .ablation import build_ablation
from .training_types import FitResult, FoldResult, LossTrace, TrainConfig
from src.data.cohort import split_monte_carlo
from src.data.cohort_types import Cohort
from src.model.losses import objective
from src.model.network import SurvivalModel
from src.survival.metrics import concordance_index
from src.survival.survival_types import RiskMode
from src.util.errors import CohortDataError, MurreNetError, TrainingError
from src.util.logs import ProgressCallback, progress_logger

logger = logging.getLogger(__name__)


def _check_partition(train: Cohort, val: Cohort) -> None:
    overlap = sorted(set(train.patient_ids) & set(val.patient_ids))
    if overlap:
        raise TrainingError(f"patient leakage: {len(overlap)} patient(s) in both parts, first {overlap[0]}")
    if not train.is_discretized or not val.is_discretized:
        raise CohortDataError("train and validation parts must both carry time bins")
    if not np.array_equal(train.bin_edges, val.bin_edges):
        raise CohortDataError("validation bins were not assigned with the training bin edges")


def predict_risks(
    model: SurvivalModel,
    cohort: Cohort,
    risk_mode: RiskMode = RiskMode.NEG_SURVIVAL_SUM,
) -> np.ndarray:
    """Scalar risk per patient, in cohort order, with the model in eval mode."""
    model.eval()
    risks = np.empty(len(cohort))
    with torch.no_grad():
        for i, patient in enumerate(cohort.patients):
            risks[i] = model(patient).hazard_output(risk_mode).risk
    return risks


def _train_epochs(
    model: SurvivalModel,
    train: Cohort,
    config: TrainConfig,
    seed: int,
    fold: int,
    log: ProgressCallback,
) -> LossTrace:
    trace = LossTrace()
    if config.epochs == 0:
        return trace

    weights = config.effective_weights
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    order_rng = np.random.default_rng(seed)
    model.train()
    optimizer.zero_grad()

    for epoch in range(config.epochs):
        sums: dict[str, float] = {}
        pending = 0
        for idx in order_rng.permutation(len(train)):
            patient = train.patients[idx]
            try:
                output = model(patient)
                breakdown = objective(
                    output.bundle, output.hazards, int(patient.time_bin), patient.event_observed,
                    weights, config.sim_variant, config.diff_sign,
                )
            except MurreNetError as e:
                raise TrainingError(f"fold {fold} epoch {epoch + 1} patient {patient.patient_id}: {e}") from e

            (breakdown.l_total / config.accumulate_steps).backward()
            pending += 1
            if pending == config.accumulate_steps:
                optimizer.step()
                optimizer.zero_grad()
                pending = 0

            values = breakdown.as_floats()
            trace.step_totals.append(values["l_total"])
            for name, value in values.items():
                sums[name] = sums.get(name, 0.0) + value

        # Flush a partial accumulation window at the end of the epoch
        if pending:
            optimizer.step()
            optimizer.zero_grad()

        means = {name: total / len(train) for name, total in sums.items()}
        trace.epoch_means.append(means)
        log(f"[train] fold {fold} epoch {epoch + 1}/{config.epochs} l_total={means['l_total']:.4f}")
    return trace


def train_fold(
    train: Cohort,
    val: Cohort,
    config: TrainConfig,
    progress_callback: ProgressCallback | None = None,
    fold: int = 0,
    seed: int | None = None,
) -> FoldResult:
    """
    Train one model on `train` and score it on `val`.

    Batch size is one patient; gradients are averaged over `accumulate_steps` patients
    before each Adam step. The same seed, config and cohorts reproduce the same loss
    trace and parameters.

    Args:
        train: Discretized training part
        val: Validation part labelled with the training bin edges
        config: Run configuration
        progress_callback: Optional callback for per-epoch progress messages
        fold: Fold index used in messages and to derive the default seed
        seed: Parameter and ordering seed, defaults to config.seed + fold

    Raises:
        TrainingError: On patient leakage or a non-finite loss (naming the component)
        CohortDataError: If the parts do not share bin edges
    """
    log = progress_logger(logger, progress_callback)
    _check_partition(train, val)
    seed = config.seed + fold if seed is None else seed

    model = build_ablation(config, train.d_in_p, train.d_in_g, seed=seed)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        trace = _train_epochs(model, train, config, seed, fold, log)

    try:
        risks = predict_risks(model, val, config.risk_mode)
        c_index = concordance_index(risks, val.times(), val.events())
    except MurreNetError as e:
        raise TrainingError(f"fold {fold} validation: {e}") from e
    log(f"[train] fold {fold} validation C-index {c_index:.4f}")

    return FoldResult(
        fold=fold,
        state_dict={k: v.detach().clone() for k, v in model.state_dict().items()},
        val_c_index=c_index,
        trace=trace,
        bin_edges=train.bin_edges.copy(),
        train_ids=train.patient_ids,
        val_ids=val.patient_ids,
    )


def _fold_worker(fold: int, train: Cohort, val: Cohort, config: TrainConfig) -> FoldResult:
    return train_fold(train, val, config, fold=fold)


def run_cv(
    cohort: Cohort,
    config: TrainConfig,
    progress_callback: ProgressCallback | None = None,
    jobs: int | None = None,
) -> FitResult:
    """
    Monte-Carlo cross-validation: `n_splits` stratified partitions, one model per fold.

    With jobs > 1 folds run in separate processes; each fold is seeded independently
    so the results match a sequential run.

    Raises:
        CohortDataError: If the cohort cannot be stratified
        TrainingError: If any fold fails, naming the fold
    """
    log = progress_logger(logger, progress_callback)
    jobs = config.jobs if jobs is None else jobs
    splits = split_monte_carlo(cohort, config.n_splits, config.train_fraction, config.seed, n_bins=config.model.n_bins)
    log(f"[train] model {config.flags.model_name}: {len(splits)} folds over {len(cohort)} patients")

    folds: list[FoldResult] = []
    if jobs > 1 and len(splits) > 1:
        context = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=min(jobs, len(splits)), mp_context=context) as pool:
            futures = [pool.submit(_fold_worker, i, train, val, config) for i, (train, val) in enumerate(splits)]
            for i, future in enumerate(futures):
                try:
                    result = future.result()
                except TrainingError:
                    raise
                except MurreNetError as e:
                    raise TrainingError(f"fold {i}: {e}") from e
                log(f"[train] fold {i} validation C-index {result.val_c_index:.4f}")
                folds.append(result)
    else:
        for i, (train, val) in enumerate(splits):
            try:
                folds.append(train_fold(train, val, config, progress_callback, fold=i))
            except TrainingError:
                raise
            except MurreNetError as e:
                raise TrainingError(f"fold {i}: {e}") from e

    fit = FitResult(folds=folds, config=config, d_in_p=cohort.d_in_p, d_in_g=cohort.d_in_g)
    log(f"[train] model {config.flags.model_name}: C-index {fit.mean_c_index:.4f} ± {fit.std_c_index:.4f}")
    return fit
