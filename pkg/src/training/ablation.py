"""
Model ladder: build any rung A-F and tabulate cross-validated results across rungs.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import pandas as pd
import torch

from .training_types import FitResult, TrainConfig
from src.model.layers import count_parameters
from src.model.model_types import AblationFlags
from src.model.network import SurvivalModel, build_model

LADDER = ("A", "B", "C", "D", "E", "F")
ABLATION_COLUMNS = ["model", "use_mrd", "use_dhof", "use_sim", "use_diff", "use_recon", "n_parameters", "mean_c_index", "std_c_index"]


def build_ablation(config: TrainConfig, d_in_p: int, d_in_g: int, seed: int | None = None) -> SurvivalModel:
    """
    Instantiate the model selected by `config.flags` in the configured precision.

    Parameters are drawn under `seed` (default config.seed) without touching the
    caller's global torch generator.
    """
    seed = config.seed if seed is None else seed
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = build_model(config.model, config.flags, d_in_p, d_in_g)
    return model.to(config.dtype)


def ladder_config(config: TrainConfig, name: str) -> TrainConfig:
    return replace(config, flags=AblationFlags.for_model(name))


@dataclass
class AblationRow:
    model: str
    flags: AblationFlags
    n_parameters: int
    mean_c_index: float
    std_c_index: float

    @classmethod
    def from_fit(cls, fit: FitResult) -> AblationRow:
        model = build_ablation(fit.config, fit.d_in_p, fit.d_in_g)
        return cls(
            model=fit.config.flags.model_name,
            flags=fit.config.flags,
            n_parameters=count_parameters(model),
            mean_c_index=fit.mean_c_index,
            std_c_index=fit.std_c_index,
        )


def write_ablation_tsv(path: Path, rows: list[AblationRow]) -> None:
    table = pd.DataFrame(
        [
            {
                "model": r.model,
                "use_mrd": r.flags.use_mrd, "use_dhof": r.flags.use_dhof, "use_sim": r.flags.use_sim,
                "use_diff": r.flags.use_diff, "use_recon": r.flags.use_recon,
                "n_parameters": r.n_parameters,
                "mean_c_index": r.mean_c_index, "std_c_index": r.std_c_index,
            }
            for r in rows
        ],
        columns=ABLATION_COLUMNS,
    )
    table.to_csv(path, sep="\t", index=False, float_format="%.17g")
