"""
Versioned fold checkpoints: config snapshot, parameters, bin edges and metrics.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch

from .ablation import build_ablation
from .config import config_from_sections
from .trainer import predict_risks
from .training_types import FitResult, FoldResult, TrainConfig
from src.data.cohort_types import Cohort
from src.model.network import SurvivalModel
from src.survival.metrics import concordance_index
from src.util.errors import CohortDataError, ConfigError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "murrenet-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    config: TrainConfig
    state_dict: dict[str, torch.Tensor]
    bin_edges: np.ndarray
    n_bins: int
    d_in_p: int
    d_in_g: int
    fold: int
    metrics: dict[str, float]
    val_patient_ids: list[str]

    def restore_model(self) -> SurvivalModel:
        """Rebuild the model this checkpoint was trained as and load its parameters."""
        model = build_ablation(self.config, self.d_in_p, self.d_in_g)
        try:
            model.load_state_dict(self.state_dict)
        except RuntimeError as e:
            raise ConfigError(f"checkpoint parameters do not match its config: {e}")
        model.eval()
        return model


def save_checkpoint(path: Path, fold: FoldResult, fit: FitResult) -> None:
    payload: dict[str, Any] = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": fit.config.to_sections(),
        "state_dict": fold.state_dict,
        "bin_edges": fold.bin_edges.tolist(),
        "n_bins": fit.config.model.n_bins,
        "d_in_p": fit.d_in_p,
        "d_in_g": fit.d_in_g,
        "fold": fold.fold,
        "metrics": {"val_c_index": fold.val_c_index},
        "val_patient_ids": list(fold.val_ids),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    logger.debug("wrote checkpoint %s", path)


def save_fit_checkpoints(out_dir: Path, fit: FitResult) -> list[Path]:
    paths = []
    for fold in fit.folds:
        path = out_dir / "checkpoints" / f"fold_{fold.fold}.pt"
        save_checkpoint(path, fold, fit)
        paths.append(path)
    return paths


def load_checkpoint(path: Path) -> Checkpoint:
    """
    Read a checkpoint written by save_checkpoint.

    Raises:
        CohortDataError: If the file is missing, not a MurreNet checkpoint, or of another version
        ConfigError: If its config snapshot is invalid
    """
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise CohortDataError(f"checkpoint not found: {path}")
    except Exception as e:
        raise CohortDataError(f"cannot read checkpoint {path}: {e}")

    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CohortDataError(f"{path} is not a MurreNet checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CohortDataError(f"checkpoint version {payload.get('version')} is not supported (expected {CHECKPOINT_VERSION})")

    return Checkpoint(
        config=config_from_sections(payload["config"]),
        state_dict=payload["state_dict"],
        bin_edges=np.asarray(payload["bin_edges"], dtype=np.float64),
        n_bins=int(payload["n_bins"]),
        d_in_p=int(payload["d_in_p"]),
        d_in_g=int(payload["d_in_g"]),
        fold=int(payload["fold"]),
        metrics={k: float(v) for k, v in payload["metrics"].items()},
        val_patient_ids=list(payload["val_patient_ids"]),
    )


def evaluate_checkpoint(checkpoint: Checkpoint, cohort: Cohort) -> tuple[np.ndarray, float]:
    """
    Risk scores and C-index of a checkpointed model on `cohort`.

    Raises:
        CohortDataError: If the cohort feature widths differ from the checkpoint's
        SurvivalMetricError: If the cohort has no comparable pair
    """
    if (cohort.d_in_p, cohort.d_in_g) != (checkpoint.d_in_p, checkpoint.d_in_g):
        raise CohortDataError(
            f"cohort feature widths ({cohort.d_in_p}, {cohort.d_in_g}) do not match the checkpoint "
            f"({checkpoint.d_in_p}, {checkpoint.d_in_g})"
        )
    risks = predict_risks(checkpoint.restore_model(), cohort, checkpoint.config.risk_mode)
    return risks, concordance_index(risks, cohort.times(), cohort.events())
