from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
import torch

from src.data.cohort_io import write_cohort
from src.data.cohort_types import Cohort, PatientRecord, SyntheticSpec
from src.data.synthetic import make_synthetic_cohort
from src.model.model_types import AblationFlags, ModelConfig
from src.training.training_types import TrainConfig


def make_patient(
    rng: np.random.Generator,
    n_p: int = 4,
    n_g: int = 6,
    d_in_p: int = 6,
    d_in_g: int = 5,
    time_bin: int | None = 1,
    event: bool = True,
    patient_id: str = "P-0",
    survival_time: float = 1.0,
) -> PatientRecord:
    return PatientRecord(
        patient_id=patient_id,
        pathology_tokens=rng.standard_normal((n_p, d_in_p)),
        genomic_groups=rng.standard_normal((n_g, d_in_g)),
        survival_time=survival_time,
        event_observed=event,
        time_bin=time_bin,
    )


def label_only_cohort(times, events, n_bins: int = 4) -> Cohort:
    """Cohort with 1x1 features, for tests that only look at survival labels."""
    patients = tuple(
        PatientRecord(
            patient_id=f"P-{i:03d}",
            pathology_tokens=np.zeros((1, 1), dtype=np.float32),
            genomic_groups=np.zeros((1, 1), dtype=np.float32),
            survival_time=float(t),
            event_observed=bool(e),
        )
        for i, (t, e) in enumerate(zip(times, events))
    )
    return Cohort(patients=patients, n_bins=n_bins)


def rewrite_manifest_cell(cohort_dir: Path, column: str, value: str, row: int = 0) -> None:
    """Overwrite one cell of a cohort manifest in place."""
    manifest = cohort_dir / "manifest.tsv"
    lines = manifest.read_text(encoding="utf-8").splitlines()
    cells = lines[row + 1].split("\t")
    cells[lines[0].split("\t").index(column)] = value
    lines[row + 1] = "\t".join(cells)
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    return ModelConfig(d=8, n_heads=2, n_landmarks=8, gate_hidden=4, n_bins=4)


@pytest.fixture
def f64_config(tiny_model_config: ModelConfig) -> TrainConfig:
    return TrainConfig(model=tiny_model_config, precision="float64", flags=AblationFlags())


@pytest.fixture
def fast_train_config(tiny_model_config: ModelConfig) -> TrainConfig:
    return TrainConfig(epochs=2, n_splits=2, lr=1e-3, model=tiny_model_config)


@pytest.fixture
def small_spec() -> SyntheticSpec:
    return SyntheticSpec(n_patients=30, n_p_range=(2, 5), d_in_p=6, d_in_g=5, n_groups=4, seed=3)


@pytest.fixture
def small_cohort(small_spec: SyntheticSpec) -> Cohort:
    return make_synthetic_cohort(small_spec)


@pytest.fixture
def cohort_dir(tmp_path: Path, small_cohort: Cohort) -> Path:
    path = tmp_path / "cohort"
    write_cohort(small_cohort, path)
    return path


@pytest.fixture
def f64():
    """Run a test with float64 as the torch default dtype."""
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(previous)
