"""
Finite-difference verification of the analytic gradients of the training objective.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import torch

from .ablation import build_ablation
from .training_types import TrainConfig
from src.data.cohort_types import PatientRecord
from src.model.losses import objective
from src.model.model_types import ModelConfig
from src.model.network import SurvivalModel
from src.util.errors import ConfigError
from src.util.logs import ProgressCallback, progress_logger

logger = logging.getLogger(__name__)

FD_STEP = 1e-5
REL_TOLERANCE = 1e-4
# Gradients below this magnitude are compared absolutely
GRAD_FLOOR = 1e-4
MAX_CHECK_D = 16
MAX_CHECK_TOKENS = 6

LossFn = Callable[[], torch.Tensor]


@dataclass(frozen=True)
class ParamCheck:
    name: str
    n_checked: int
    max_rel_err: float


@dataclass(frozen=True)
class GradCheckReport:
    model: str
    entries: tuple[ParamCheck, ...]

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)

    @property
    def worst(self) -> ParamCheck | None:
        return max(self.entries, key=lambda e: e.max_rel_err, default=None)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < REL_TOLERANCE

    def lines(self) -> list[str]:
        return [f"{e.name}\t{e.n_checked}\t{e.max_rel_err:.3e}" for e in self.entries]


def tiny_config(config: TrainConfig) -> TrainConfig:
    """Shrink model dimensions to gradient-check size and switch to float64; flags and loss settings are kept."""
    model = config.model
    if model.d > MAX_CHECK_D:
        model = ModelConfig(
            d=8, n_heads=2, n_landmarks=8, gate_hidden=4, n_bins=model.n_bins,
            specific_residual=model.specific_residual, pool_include_common=model.pool_include_common,
        )
    return replace(config, model=model, precision="float64")


def check_patient(seed: int, n_tokens: int = 5, d_in_p: int = 6, d_in_g: int = 5, n_groups: int = 6, n_bins: int = 4) -> PatientRecord:
    """A small random uncensored patient in the last-but-one bin."""
    rng = np.random.default_rng(seed)
    return PatientRecord(
        patient_id="GRADCHECK",
        pathology_tokens=rng.standard_normal((n_tokens, d_in_p)),
        genomic_groups=rng.standard_normal((n_groups, d_in_g)),
        survival_time=1.0,
        event_observed=True,
        time_bin=max(n_bins - 2, 0),
    )


def _loss_fn(model: SurvivalModel, patient: PatientRecord, config: TrainConfig) -> LossFn:
    weights = config.effective_weights

    def loss() -> torch.Tensor:
        output = model(patient)
        return objective(
            output.bundle, output.hazards, int(patient.time_bin), patient.event_observed,
            weights, config.sim_variant, config.diff_sign,
        ).l_total

    return loss


def _analytic_gradients(model: SurvivalModel, loss_fn: LossFn) -> dict[str, torch.Tensor]:
    names, params = zip(*model.named_parameters())
    grads = torch.autograd.grad(loss_fn(), params, allow_unused=True)
    return {
        name: (g if g is not None else torch.zeros_like(p)).detach().clone()
        for name, p, g in zip(names, params, grads)
    }


def _numeric_gradient(param: torch.Tensor, index: int, loss_fn: LossFn, step: float) -> float:
    flat = param.data.view(-1)
    original = float(flat[index])
    with torch.no_grad():
        flat[index] = original + step
        plus = float(loss_fn())
        flat[index] = original - step
        minus = float(loss_fn())
        flat[index] = original
    return (plus - minus) / (2.0 * step)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), GRAD_FLOOR)


def gradient_check(
    config: TrainConfig,
    seed: int = 0,
    patient: PatientRecord | None = None,
    step: float = FD_STEP,
    max_entries: int | None = None,
    progress_callback: ProgressCallback | None = None,
) -> GradCheckReport:
    """
    Compare autograd gradients of L_total with central differences for every parameter array.

    Runs in float64 with the model in eval mode. Each parameter name appears once in the
    report with the largest relative error over its checked entries.

    Args:
        config: Run configuration; must already have tiny dimensions (see tiny_config)
        seed: Seed for parameters, the check patient and entry subsampling
        patient: Patient to check, defaults to check_patient(seed)
        step: Central-difference step
        max_entries: Check at most this many random entries per array (all when None)

    Raises:
        ConfigError: If the model or patient is too large for a finite-difference check
    """
    log = progress_logger(logger, progress_callback)
    if config.model.d > MAX_CHECK_D:
        raise ConfigError(f"model.d must be <= {MAX_CHECK_D} for a gradient check, got {config.model.d}")
    config = replace(config, precision="float64")
    patient = patient or check_patient(seed, n_bins=config.model.n_bins)
    if patient.n_tokens > MAX_CHECK_TOKENS:
        raise ConfigError(f"gradient check patient has {patient.n_tokens} tokens (max {MAX_CHECK_TOKENS})")

    model = build_ablation(config, patient.pathology_tokens.shape[1], patient.genomic_groups.shape[1], seed=seed)
    model.eval()
    loss_fn = _loss_fn(model, patient, config)
    analytic = _analytic_gradients(model, loss_fn)
    pick_rng = np.random.default_rng(seed)

    entries = []
    for name, param in model.named_parameters():
        size = param.numel()
        indices = np.arange(size)
        if max_entries is not None and size > max_entries:
            indices = np.sort(pick_rng.choice(size, size=max_entries, replace=False))
        grad = analytic[name].view(-1)
        worst = 0.0
        for index in indices:
            numeric = _numeric_gradient(param, int(index), loss_fn, step)
            worst = max(worst, relative_error(float(grad[index]), numeric))
        entries.append(ParamCheck(name=name, n_checked=len(indices), max_rel_err=worst))

    report = GradCheckReport(model=config.flags.model_name, entries=tuple(entries))
    log(f"[gradcheck] model {report.model}: max relative error {report.max_rel_err:.3e} over {len(entries)} arrays")
    return report
