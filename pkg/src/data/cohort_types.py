from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from src.util.errors import CohortDataError, ConfigError

# Six genomic families: kinases, tumour suppressors, oncogenes, differentiation markers,
# transcription factors, cytokines/growth factors
DEFAULT_GENOMIC_GROUPS = 6
DEFAULT_N_BINS = 4


@dataclass(frozen=True, eq=False)
class PatientRecord:
    """One patient: a bag of patch features, grouped genomic vectors and a survival label."""
    patient_id: str
    pathology_tokens: np.ndarray    # (N_p, D_in_p)
    genomic_groups: np.ndarray      # (N_g, D_in_g)
    survival_time: float
    event_observed: bool
    time_bin: int | None = None

    def __post_init__(self) -> None:
        if self.pathology_tokens.ndim != 2 or self.pathology_tokens.shape[0] < 1:
            raise CohortDataError(
                f"patient {self.patient_id}: pathology_tokens must be a non-empty (N_p, D) matrix, "
                f"got shape {self.pathology_tokens.shape}"
            )
        if self.genomic_groups.ndim != 2 or self.genomic_groups.shape[0] < 1:
            raise CohortDataError(
                f"patient {self.patient_id}: genomic_groups must be a non-empty (N_g, D) matrix, "
                f"got shape {self.genomic_groups.shape}"
            )
        if not np.isfinite(self.survival_time) or self.survival_time <= 0:
            raise CohortDataError(f"patient {self.patient_id}: survival_time must be > 0, got {self.survival_time}")

    @property
    def n_tokens(self) -> int:
        return int(self.pathology_tokens.shape[0])

    @property
    def n_groups(self) -> int:
        return int(self.genomic_groups.shape[0])

    def with_bin(self, time_bin: int) -> PatientRecord:
        return replace(self, time_bin=int(time_bin))

    def same_as(self, other: PatientRecord) -> bool:
        """Exact equality of identifiers, labels and every feature array."""
        return (
            self.patient_id == other.patient_id
            and self.survival_time == other.survival_time
            and self.event_observed == other.event_observed
            and self.time_bin == other.time_bin
            and np.array_equal(self.pathology_tokens, other.pathology_tokens)
            and np.array_equal(self.genomic_groups, other.genomic_groups)
        )


@dataclass(frozen=True, eq=False)
class Cohort:
    """
    A set of patients plus the cut points used to discretize survival.

    `bin_edges` is empty until the cohort has been discretized.
    """
    patients: tuple[PatientRecord, ...]
    bin_edges: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_bins: int = DEFAULT_N_BINS

    def __post_init__(self) -> None:
        if not self.patients:
            raise CohortDataError("cohort has no patients")
        d_p = {p.pathology_tokens.shape[1] for p in self.patients}
        d_g = {p.genomic_groups.shape[1] for p in self.patients}
        if len(d_p) != 1 or len(d_g) != 1:
            raise CohortDataError(f"patients disagree on feature widths: D_in_p {sorted(d_p)}, D_in_g {sorted(d_g)}")
        ids = [p.patient_id for p in self.patients]
        if len(set(ids)) != len(ids):
            raise CohortDataError("duplicate patient_id in cohort")
        if self.bin_edges.size and np.any(np.diff(self.bin_edges) < 0):
            raise CohortDataError("bin_edges must be ascending")

    def __len__(self) -> int:
        return len(self.patients)

    @property
    def d_in_p(self) -> int:
        return int(self.patients[0].pathology_tokens.shape[1])

    @property
    def d_in_g(self) -> int:
        return int(self.patients[0].genomic_groups.shape[1])

    @property
    def is_discretized(self) -> bool:
        return all(p.time_bin is not None for p in self.patients) and self.bin_edges.size == self.n_bins - 1

    @property
    def patient_ids(self) -> list[str]:
        return [p.patient_id for p in self.patients]

    def times(self) -> np.ndarray:
        return np.array([p.survival_time for p in self.patients], dtype=np.float64)

    def events(self) -> np.ndarray:
        return np.array([p.event_observed for p in self.patients], dtype=bool)

    def subset(self, indices: Sequence[int]) -> Cohort:
        return Cohort(
            patients=tuple(self.patients[i] for i in indices),
            bin_edges=self.bin_edges.copy(),
            n_bins=self.n_bins,
        )

    def same_as(self, other: Cohort) -> bool:
        return (
            len(self) == len(other)
            and self.n_bins == other.n_bins
            and np.array_equal(self.bin_edges, other.bin_edges)
            and all(a.same_as(b) for a, b in zip(self.patients, other.patients))
        )


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic cohort generator."""
    n_patients: int = 400
    n_p_range: tuple[int, int] = (8, 24)
    d_in_p: int = 32
    d_in_g: int = 16
    n_groups: int = DEFAULT_GENOMIC_GROUPS
    shared_signal_strength: float = 2.0
    specific_signal_strength_p: float = 1.0
    specific_signal_strength_g: float = 1.0
    noise_sigma: float = 0.5
    censor_rate: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_patients < 1:
            raise ConfigError("synthetic.n_patients must be >= 1")
        lo, hi = self.n_p_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"synthetic.n_p_range must satisfy 1 <= min <= max, got {self.n_p_range}")
        if self.d_in_p < 1 or self.d_in_g < 1 or self.n_groups < 1:
            raise ConfigError("synthetic.d_in_p, d_in_g and n_groups must be >= 1")
        for name in ("shared_signal_strength", "specific_signal_strength_p", "specific_signal_strength_g"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ConfigError(f"synthetic.{name} must be finite and >= 0, got {value}")
        if not np.isfinite(self.noise_sigma) or self.noise_sigma <= 0:
            raise ConfigError(f"synthetic.noise_sigma must be > 0, got {self.noise_sigma}")
        if not 0.0 <= self.censor_rate <= 1.0:
            raise ConfigError(f"synthetic.censor_rate must lie in [0, 1], got {self.censor_rate}")


@dataclass(frozen=True, eq=False)
class SyntheticLatents:
    """Generator bookkeeping: the planted risk factors and pre-censoring event times."""
    z_shared: np.ndarray
    z_p: np.ndarray
    z_g: np.ndarray
    event_times: np.ndarray
    u_p: np.ndarray
    u_g: np.ndarray
