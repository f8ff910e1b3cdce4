from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class RiskMode(Enum):
    NEG_SURVIVAL_SUM = "neg_survival_sum"   # risk = -sum_t S(t)
    HAZARD_SUM = "hazard_sum"               # risk = sum_t h_t


@dataclass(frozen=True, eq=False)
class HazardOutput:
    hazards: np.ndarray
    survival: np.ndarray
    risk: float


@dataclass(frozen=True, eq=False)
class KMCurve:
    """Product-limit step function evaluated at the distinct event times."""
    event_times: np.ndarray
    survival_probs: np.ndarray
    at_risk_counts: np.ndarray

    def survival_at(self, t: float) -> float:
        """S(t) of the step function; 1.0 before the first event."""
        idx = int(np.searchsorted(self.event_times, t, side="right"))
        return 1.0 if idx == 0 else float(self.survival_probs[idx - 1])


@dataclass(frozen=True)
class LogRankResult:
    chi2: float
    p_value: float


@dataclass(frozen=True, eq=False)
class Stratification:
    low_idx: np.ndarray
    high_idx: np.ndarray
    median: float
