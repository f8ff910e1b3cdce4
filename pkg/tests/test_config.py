from __future__ import annotations

from pathlib import Path

import pytest

from src.model.model_types import SimVariant
from src.survival.survival_types import RiskMode
from src.training.config import config_from_sections, load_train_config
from src.training.training_types import TrainConfig
from src.util.context import SEED_ENV_VAR, Context
from src.util.errors import ConfigError


def write_toml(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "run.toml"
    path.write_text(text, encoding="utf-8")
    return path


def test_defaults_come_from_config_toml(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    config = load_train_config()
    assert config.lr == Context.Config.get("train", "lr")
    assert config.model.d == Context.Config.get("model", "d")
    assert config.weights.gamma == 1.0
    assert config.flags.model_name == "F"
    assert config.sim_variant is SimVariant.PROSE
    assert config.risk_mode is RiskMode.NEG_SURVIVAL_SUM


def test_user_file_overrides_defaults(tmp_path, monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    path = write_toml(tmp_path, '[train]\nepochs = 3\n\n[loss]\nalpha = 0.5\nsim_variant = "literal"\n\n[model]\nd = 16\nn_heads = 4\n')
    config = load_train_config(path)
    assert config.epochs == 3
    assert config.weights.alpha == 0.5
    assert config.sim_variant is SimVariant.LITERAL
    assert config.model.d == 16 and config.model.n_heads == 4
    assert config.lr == Context.Config.get("train", "lr")


def test_integer_accepted_for_float_field(tmp_path):
    config = load_train_config(write_toml(tmp_path, "[loss]\ngamma = 2\n"))
    assert config.weights.gamma == 2.0 and isinstance(config.weights.gamma, float)


@pytest.mark.parametrize(
    "text, field",
    [
        ('[loss]\nalpha = "big"\n', "loss.alpha"),
        ("[loss]\nalpha = -1.0\n", "loss.alpha"),
        ("[train]\nmomentum = 0.9\n", "train.momentum"),
        ("[train]\nepochs = 0\n", "train.epochs"),
        ("[train]\nepochs = 2.5\n", "train.epochs"),
        ('[train]\nprecision = "float16"\n', "train.precision"),
        ("[model]\nd = 10\nn_heads = 4\n", "model.n_heads"),
        ('[model]\nrisk_mode = "median"\n', "model.risk_mode"),
        ('[loss]\nsim_variant = "cosine"\n', "loss.sim_variant"),
        ("[ablation]\nuse_mrd = false\n", "ablation.use_dhof"),
        ("[ablation]\nuse_sim = 1\n", "ablation.use_sim"),
        ("[optimizer]\nlr = 0.1\n", "optimizer"),
    ],
)
def test_invalid_values_name_the_field(tmp_path, text, field):
    with pytest.raises(ConfigError, match=field):
        load_train_config(write_toml(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_train_config(tmp_path / "absent.toml")


def test_invalid_toml(tmp_path):
    with pytest.raises(ConfigError, match="not valid TOML"):
        load_train_config(write_toml(tmp_path, "[train\nlr = \n"))


def test_passthrough_sections_are_ignored(tmp_path, monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    config = load_train_config(write_toml(tmp_path, "[synthetic]\nn_patients = 10\n\n[app]\nname = \"x\"\n"))
    assert config == config_from_sections({})


def test_seed_precedence(tmp_path, monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    without_seed = write_toml(tmp_path, "[train]\nepochs = 1\n")
    assert load_train_config(without_seed).seed == Context.Config.get("train", "seed")

    monkeypatch.setenv(SEED_ENV_VAR, "7")
    assert load_train_config(without_seed).seed == 7

    with_seed = tmp_path / "seeded.toml"
    with_seed.write_text("[train]\nseed = 3\n", encoding="utf-8")
    assert load_train_config(with_seed).seed == 3
    assert load_train_config(with_seed, seed_override=11).seed == 11


def test_bad_seed_environment(monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "seven")
    with pytest.raises(ConfigError, match=SEED_ENV_VAR):
        load_train_config()


def test_jobs_override(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    assert load_train_config(jobs_override=3).jobs == 3
    with pytest.raises(ConfigError, match="train.jobs"):
        load_train_config(jobs_override=0)


def test_sections_round_trip():
    config = config_from_sections({
        "train": {"epochs": 4, "seed": 9, "precision": "float64"},
        "loss": {"beta": 0.01, "diff_sign": -1, "sim_variant": "literal"},
        "model": {"d": 8, "n_heads": 2, "n_landmarks": 8, "risk_mode": "hazard_sum"},
        "ablation": {"use_recon": False},
    })
    assert config.flags.model_name == "E"
    assert config_from_sections(config.to_sections()) == config


def test_train_config_allows_zero_epochs_in_code():
    assert TrainConfig(epochs=0).epochs == 0
    with pytest.raises(ConfigError, match="train.epochs"):
        TrainConfig(epochs=-1)


def test_effective_weights_follow_flags():
    config = config_from_sections({"ablation": {"use_diff": False, "use_recon": False}})
    weights = config.effective_weights
    assert weights.alpha == config.weights.alpha
    assert weights.beta == 0.0 and weights.gamma == 0.0
