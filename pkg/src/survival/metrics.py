"""
Discrete-hazard post-processing and survival evaluation: risk scores, concordance,
Kaplan-Meier curves, the two-group log-rank test and median risk stratification.
"""
from __future__ import annotations

import numpy as np
from scipy.special import erfc

from .survival_types import HazardOutput, KMCurve, LogRankResult, RiskMode, Stratification
from src.util.errors import DegenerateStratificationError, SurvivalMetricError


def hazards_to_output(hazards: np.ndarray, risk_mode: RiskMode = RiskMode.NEG_SURVIVAL_SUM) -> HazardOutput:
    """S(t) as the cumulative product of (1 - h_u) and a scalar risk (higher = worse prognosis)."""
    hazards = np.asarray(hazards, dtype=np.float64)
    if hazards.ndim != 1 or hazards.size == 0:
        raise SurvivalMetricError(f"hazards must be a non-empty vector, got shape {hazards.shape}")
    if not np.all(np.isfinite(hazards)) or np.any(hazards < 0.0) or np.any(hazards > 1.0):
        raise SurvivalMetricError(f"hazards must lie in [0, 1], got {hazards.tolist()}")
    survival = np.cumprod(1.0 - hazards)
    if risk_mode is RiskMode.HAZARD_SUM:
        risk = float(hazards.sum())
    else:
        risk = float(-survival.sum())
    return HazardOutput(hazards=hazards, survival=survival, risk=risk)


def concordance_index(risks: np.ndarray, times: np.ndarray, events: np.ndarray) -> float:
    """
    Harrell's C over comparable pairs.

    A pair (i, j) is comparable when time_i < time_j and i had an observed event; it is
    concordant when risk_i > risk_j, and a risk tie earns half credit.

    Raises:
        SurvivalMetricError: If no comparable pair exists
    """
    risks = np.asarray(risks, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    if not (risks.shape == times.shape == events.shape) or risks.ndim != 1:
        raise SurvivalMetricError("risks, times and events must be vectors of equal length")

    comparable = (times[:, None] < times[None, :]) & events[:, None]
    n_comparable = int(comparable.sum())
    if n_comparable == 0:
        raise SurvivalMetricError("C-index undefined: no comparable pairs")
    concordant = int((comparable & (risks[:, None] > risks[None, :])).sum())
    tied = int((comparable & (risks[:, None] == risks[None, :])).sum())
    return (concordant + 0.5 * tied) / n_comparable


def kaplan_meier(times: np.ndarray, events: np.ndarray) -> KMCurve:
    """
    Product-limit estimator.

    Censored subjects stay in the risk set at their own time, so events are processed
    before censorings that share a time.
    """
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    if times.size == 0:
        raise SurvivalMetricError("kaplan_meier needs at least one subject")

    event_times = np.unique(times[events])
    probs = np.empty(event_times.size)
    at_risk = np.empty(event_times.size, dtype=np.int64)
    running = 1.0
    for k, t in enumerate(event_times):
        r = int((times >= t).sum())
        d = int(((times == t) & events).sum())
        running *= 1.0 - d / r
        probs[k] = running
        at_risk[k] = r
    return KMCurve(event_times=event_times, survival_probs=probs, at_risk_counts=at_risk)


def chi2_sf_1dof(chi2: float) -> float:
    """Upper tail of the chi-square distribution with one degree of freedom."""
    return float(erfc(np.sqrt(max(chi2, 0.0) / 2.0)))


def log_rank_test(
    times_a: np.ndarray,
    events_a: np.ndarray,
    times_b: np.ndarray,
    events_b: np.ndarray,
) -> LogRankResult:
    """
    Two-group log-rank test with hypergeometric variance.

    Raises:
        SurvivalMetricError: For an empty group, no events, or zero total variance
    """
    times_a = np.asarray(times_a, dtype=np.float64)
    times_b = np.asarray(times_b, dtype=np.float64)
    events_a = np.asarray(events_a, dtype=bool)
    events_b = np.asarray(events_b, dtype=bool)
    if times_a.size == 0 or times_b.size == 0:
        raise SurvivalMetricError("log-rank test needs two non-empty groups")
    if not (events_a.any() or events_b.any()):
        raise SurvivalMetricError("log-rank test needs at least one observed event")

    all_times = np.concatenate([times_a, times_b])
    all_events = np.concatenate([events_a, events_b])
    observed_minus_expected = 0.0
    variance = 0.0
    for t in np.unique(all_times[all_events]):
        n_a = int((times_a >= t).sum())
        n = int((all_times >= t).sum())
        d_a = int(((times_a == t) & events_a).sum())
        d = int(((all_times == t) & all_events).sum())
        observed_minus_expected += d_a - d * n_a / n
        if n > 1:
            variance += d * (n_a / n) * (1.0 - n_a / n) * (n - d) / (n - 1)

    if variance <= 0.0:
        raise SurvivalMetricError("log-rank test undefined: zero variance")
    chi2 = observed_minus_expected ** 2 / variance
    return LogRankResult(chi2=float(chi2), p_value=chi2_sf_1dof(chi2))


def stratify_by_median(risks: np.ndarray) -> Stratification:
    """Split at the median risk: high = risk > median, low = risk <= median."""
    risks = np.asarray(risks, dtype=np.float64)
    if risks.ndim != 1 or risks.size < 2:
        raise DegenerateStratificationError("degenerate stratification: need at least two risks")
    if np.all(risks == risks[0]):
        raise DegenerateStratificationError("degenerate stratification: all risks identical")
    median = float(np.median(risks))
    high = np.flatnonzero(risks > median)
    low = np.flatnonzero(risks <= median)
    return Stratification(low_idx=low, high_idx=high, median=median)
