"""
Survival-time discretization and Monte-Carlo cross-validation splits.
"""
from __future__ import annotations

import logging

import numpy as np

from .cohort_types import Cohort
from src.util.errors import CohortDataError, DiscretizationError

logger = logging.getLogger(__name__)


def quantile_edges(times: np.ndarray, n_bins: int) -> np.ndarray:
    """Interior cut points at the k/T quantiles (linear interpolation between order statistics)."""
    levels = np.arange(1, n_bins) / n_bins
    return np.quantile(np.asarray(times, dtype=np.float64), levels, method="linear")


def bin_index(times: np.ndarray, bin_edges: np.ndarray) -> np.ndarray:
    """Number of edges strictly below each time."""
    return np.searchsorted(bin_edges, times, side="left").astype(np.int64)


def assign_bins(cohort: Cohort, bin_edges: np.ndarray, n_bins: int | None = None) -> Cohort:
    """Label every patient against externally fitted bin edges (e.g. a validation split)."""
    n_bins = cohort.n_bins if n_bins is None else n_bins
    edges = np.asarray(bin_edges, dtype=np.float64)
    if edges.size != n_bins - 1:
        raise DiscretizationError(f"expected {n_bins - 1} bin edges for {n_bins} bins, got {edges.size}")
    bins = bin_index(cohort.times(), edges)
    return Cohort(
        patients=tuple(p.with_bin(b) for p, b in zip(cohort.patients, bins)),
        bin_edges=edges.copy(),
        n_bins=n_bins,
    )


def discretize_survival(cohort: Cohort, n_bins: int) -> Cohort:
    """
    Fit quantile bin edges on the uncensored survival times and label every patient.

    Args:
        cohort: Patients to discretize (any existing labels are recomputed)
        n_bins: Number of discrete time bins T (>= 2)

    Returns:
        A new Cohort with T-1 ascending edges and every time_bin set

    Raises:
        DiscretizationError: If n_bins < 2 or no patient has an observed event
    """
    if n_bins < 2:
        raise DiscretizationError(f"n_bins must be >= 2, got {n_bins}")
    events = cohort.events()
    if not events.any():
        raise DiscretizationError("cannot discretize: no observed events")
    uncensored = cohort.times()[events]
    if uncensored.size < n_bins:
        logger.debug("only %d uncensored times for %d bins; quantiles may repeat", uncensored.size, n_bins)
    edges = quantile_edges(uncensored, n_bins)
    return assign_bins(cohort, edges, n_bins)


def _stratum_train_counts(n_events: int, n_censored: int, train_fraction: float) -> tuple[int, int]:
    n = n_events + n_censored
    n_train = int(round(train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    # Every stratum with >= 2 patients puts at least one on each side
    events_lo, events_hi = 1, n_events - 1
    censored_lo, censored_hi = (1, n_censored - 1) if n_censored >= 2 else (0, n_censored)

    n_train_events = min(max(int(round(train_fraction * n_events)), events_lo), events_hi)
    n_train_censored = min(max(n_train - n_train_events, censored_lo), censored_hi)
    n_train_events = min(max(n_train - n_train_censored, events_lo), events_hi)
    return n_train_events, n_train_censored


def split_monte_carlo(
    cohort: Cohort,
    n_splits: int,
    train_fraction: float,
    seed: int,
    n_bins: int | None = None,
) -> list[tuple[Cohort, Cohort]]:
    """
    Draw independent stratified train/validation partitions.

    Each split stratifies on the event indicator, refits bin edges on its training
    part only and labels the validation part with those edges.

    Args:
        cohort: Full cohort (labels, if any, are ignored)
        n_splits: Number of random partitions
        train_fraction: Share of patients in each training part, strictly in (0, 1)
        seed: Seed of the partition generator
        n_bins: Number of time bins, defaults to cohort.n_bins

    Raises:
        CohortDataError: If the fraction is out of range or a stratum is too small
    """
    if not 0.0 < train_fraction < 1.0:
        raise CohortDataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if n_splits < 1:
        raise CohortDataError(f"n_splits must be >= 1, got {n_splits}")
    n_bins = cohort.n_bins if n_bins is None else n_bins

    events = cohort.events()
    event_idx = np.flatnonzero(events)
    censored_idx = np.flatnonzero(~events)
    if event_idx.size < 2:
        raise CohortDataError(
            f"cohort too small to stratify: stratum 'events' has {event_idx.size} patients (need >= 2)"
        )

    n_train_events, n_train_censored = _stratum_train_counts(event_idx.size, censored_idx.size, train_fraction)
    rng = np.random.default_rng(seed)
    splits: list[tuple[Cohort, Cohort]] = []
    for _ in range(n_splits):
        ev = rng.permutation(event_idx)
        ce = rng.permutation(censored_idx)
        train_idx = np.sort(np.concatenate([ev[:n_train_events], ce[:n_train_censored]]))
        val_idx = np.sort(np.concatenate([ev[n_train_events:], ce[n_train_censored:]]))

        train = discretize_survival(cohort.subset(train_idx.tolist()), n_bins)
        val = assign_bins(cohort.subset(val_idx.tolist()), train.bin_edges, n_bins)
        splits.append((train, val))

    logger.debug(
        "drew %d splits: %d train (%d events) / %d val",
        n_splits, n_train_events + n_train_censored, n_train_events, len(cohort) - n_train_events - n_train_censored,
    )
    return splits
