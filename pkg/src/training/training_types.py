from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import torch

from src.model.model_types import AblationFlags, LossWeights, ModelConfig, SimVariant, dataclass_to_dict
from src.survival.survival_types import RiskMode
from src.util.errors import ConfigError

PRECISIONS = {"float32": torch.float32, "float64": torch.float64}


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimisation protocol plus the model ladder and loss settings.

    epochs may be 0 (returns the initial parameters); config files require >= 1.
    """
    lr: float = 2e-4
    weight_decay: float = 1e-5
    epochs: int = 20
    accumulate_steps: int = 1
    n_splits: int = 5
    train_fraction: float = 0.8
    seed: int = 0
    precision: str = "float32"
    jobs: int = 1
    weights: LossWeights = field(default_factory=LossWeights)
    sim_variant: SimVariant = SimVariant.PROSE
    diff_sign: int = 1
    flags: AblationFlags = field(default_factory=AblationFlags)
    model: ModelConfig = field(default_factory=ModelConfig)
    risk_mode: RiskMode = RiskMode.NEG_SURVIVAL_SUM

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise ConfigError(f"train.lr must be > 0, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"train.weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 0:
            raise ConfigError(f"train.epochs must be >= 0, got {self.epochs}")
        if self.accumulate_steps < 1:
            raise ConfigError(f"train.accumulate_steps must be >= 1, got {self.accumulate_steps}")
        if self.n_splits < 1:
            raise ConfigError(f"train.n_splits must be >= 1, got {self.n_splits}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train.train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"train.precision must be one of {', '.join(PRECISIONS)}, got {self.precision!r}")
        if self.jobs < 1:
            raise ConfigError(f"train.jobs must be >= 1, got {self.jobs}")
        if self.diff_sign not in (1, -1):
            raise ConfigError(f"loss.diff_sign must be 1 or -1, got {self.diff_sign}")

    @property
    def dtype(self) -> torch.dtype:
        return PRECISIONS[self.precision]

    @property
    def effective_weights(self) -> LossWeights:
        return self.weights.masked(self.flags)

    def to_sections(self) -> dict[str, dict[str, Any]]:
        """Config snapshot laid out like config.toml."""
        model = dataclass_to_dict(self.model)
        model["risk_mode"] = self.risk_mode.value
        return {
            "train": {
                "lr": self.lr, "weight_decay": self.weight_decay, "epochs": self.epochs,
                "accumulate_steps": self.accumulate_steps, "n_splits": self.n_splits,
                "train_fraction": self.train_fraction, "seed": self.seed,
                "precision": self.precision, "jobs": self.jobs,
            },
            "loss": {**dataclass_to_dict(self.weights), "sim_variant": self.sim_variant.value, "diff_sign": self.diff_sign},
            "model": model,
            "ablation": dataclass_to_dict(self.flags),
        }


@dataclass
class LossTrace:
    """Per-step totals and per-epoch means of every loss term."""
    step_totals: list[float] = field(default_factory=list)
    epoch_means: list[dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {"step_totals": self.step_totals, "epoch_means": self.epoch_means}


@dataclass
class FoldResult:
    fold: int
    state_dict: dict[str, torch.Tensor]
    val_c_index: float
    trace: LossTrace
    bin_edges: np.ndarray
    train_ids: list[str]
    val_ids: list[str]


@dataclass
class FitResult:
    folds: list[FoldResult]
    config: TrainConfig
    d_in_p: int
    d_in_g: int

    @property
    def fold_c_index(self) -> list[float]:
        return [f.val_c_index for f in self.folds]

    @property
    def mean_c_index(self) -> float:
        return float(np.mean(self.fold_c_index))

    @property
    def std_c_index(self) -> float:
        return float(np.std(self.fold_c_index))

    def metric_summary(self) -> dict[str, Any]:
        """Deterministic summary: no timestamps, only values fixed by seed, config and cohort."""
        return {
            "model": self.config.flags.model_name,
            "n_splits": len(self.folds),
            "fold_c_index": self.fold_c_index,
            "mean_c_index": self.mean_c_index,
            "std_c_index": self.std_c_index,
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.metric_summary(),
            "config": self.config.to_sections(),
            "folds": [
                {
                    "fold": f.fold,
                    "val_c_index": f.val_c_index,
                    "bin_edges": f.bin_edges.tolist(),
                    "train_ids": f.train_ids,
                    "val_ids": f.val_ids,
                    "loss_trace": f.trace.to_dict(),
                }
                for f in self.folds
            ],
        }
