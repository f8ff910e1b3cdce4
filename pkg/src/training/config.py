"""
Run configuration: config.toml defaults overlaid with a user TOML file and CLI overrides.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Mapping
from tomllib import load as tomlload, TOMLDecodeError

from .training_types import TrainConfig
from src.model.model_types import AblationFlags, LossWeights, ModelConfig, SimVariant
from src.survival.survival_types import RiskMode
from src.util.context import Context
from src.util.errors import ConfigError

logger = logging.getLogger(__name__)

# section -> key -> expected type
_SCHEMA: dict[str, dict[str, type]] = {
    "train": {
        "lr": float, "weight_decay": float, "epochs": int, "accumulate_steps": int,
        "n_splits": int, "train_fraction": float, "seed": int, "precision": str, "jobs": int,
    },
    "loss": {"alpha": float, "beta": float, "gamma": float, "sim_variant": str, "diff_sign": int},
    "model": {
        "d": int, "n_heads": int, "n_landmarks": int, "gate_hidden": int, "n_bins": int,
        "specific_residual": bool, "pool_include_common": bool, "risk_mode": str,
    },
    "ablation": {"use_mrd": bool, "use_dhof": bool, "use_sim": bool, "use_diff": bool, "use_recon": bool},
}

# Sections that may appear in a run config without being part of the training schema
_PASSTHROUGH = {"app", "synthetic"}


def _check_value(section: str, key: str, value: Any) -> Any:
    expected = _SCHEMA[section][key]
    where = f"{section}.{key}"
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true or false, got {value!r}")
        return value
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def _merge(base: dict[str, dict[str, Any]], overlay: Mapping[str, Any], origin: str) -> None:
    for section, values in overlay.items():
        if section in _PASSTHROUGH:
            continue
        if section not in _SCHEMA:
            raise ConfigError(f"{section}: unknown section in {origin}")
        if not isinstance(values, Mapping):
            raise ConfigError(f"{section}: expected a table in {origin}")
        for key, value in values.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{section}.{key}: unknown key in {origin}")
            base[section][key] = _check_value(section, key, value)


def config_from_sections(sections: Mapping[str, Any]) -> TrainConfig:
    """
    Build a TrainConfig from config.toml-style sections, starting from config.toml defaults.

    Raises:
        ConfigError: Naming the offending `section.key`
    """
    merged: dict[str, dict[str, Any]] = {name: {} for name in _SCHEMA}
    defaults = {name: Context.Config.get_section(name) for name in _SCHEMA}
    _merge(merged, defaults, "config.toml")
    _merge(merged, sections, "run config")

    train, loss, model, ablation = (merged[s] for s in ("train", "loss", "model", "ablation"))
    try:
        sim_variant = SimVariant(loss.pop("sim_variant", SimVariant.PROSE.value))
    except ValueError:
        raise ConfigError(f"loss.sim_variant: expected one of {', '.join(v.value for v in SimVariant)}")
    try:
        risk_mode = RiskMode(model.pop("risk_mode", RiskMode.NEG_SURVIVAL_SUM.value))
    except ValueError:
        raise ConfigError(f"model.risk_mode: expected one of {', '.join(v.value for v in RiskMode)}")
    diff_sign = loss.pop("diff_sign", 1)

    return TrainConfig(
        **train,
        weights=LossWeights(**loss),
        sim_variant=sim_variant,
        diff_sign=diff_sign,
        flags=AblationFlags(**ablation),
        model=ModelConfig(**model),
        risk_mode=risk_mode,
    )


def load_train_config(
    path: Path | None = None,
    seed_override: int | None = None,
    jobs_override: int | None = None,
) -> TrainConfig:
    """
    Resolve the run configuration.

    Values come from config.toml, then the user file at `path`, then CLI overrides.
    The seed resolves as CLI flag > user file > MURRENET_SEED > config.toml default.

    Raises:
        ConfigError: If the file is unreadable, not TOML, or any value is invalid
    """
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                raw = tomlload(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except TOMLDecodeError as e:
            raise ConfigError(f"config file {path} is not valid TOML: {e}")

    sections: dict[str, Any] = {k: dict(v) if isinstance(v, Mapping) else v for k, v in raw.items()}
    train = sections.setdefault("train", {})
    if not isinstance(train, dict):
        raise ConfigError("train: expected a table in run config")

    if seed_override is not None:
        train["seed"] = seed_override
    elif "seed" not in train:
        env_seed = Context.env_seed()
        if env_seed is not None:
            train["seed"] = env_seed
    if jobs_override is not None:
        train["jobs"] = jobs_override

    if "epochs" in train and isinstance(train["epochs"], int) and not isinstance(train["epochs"], bool) and train["epochs"] < 1:
        raise ConfigError(f"train.epochs must be >= 1, got {train['epochs']}")

    config = config_from_sections(sections)
    logger.debug("resolved config: %s", config.to_sections())
    return config
