"""
Kaplan-Meier curves as TSV (time, survival, at_risk, group) for external plotting.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .survival_types import KMCurve
from src.util.errors import CohortDataError

KM_COLUMNS = ["time", "survival", "at_risk", "group"]


def write_km_tsv(path: Path, curves: dict[str, KMCurve]) -> None:
    frames = [
        pd.DataFrame({
            "time": curve.event_times,
            "survival": curve.survival_probs,
            "at_risk": curve.at_risk_counts,
            "group": group,
        }, columns=KM_COLUMNS)
        for group, curve in curves.items()
    ]
    table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=KM_COLUMNS)
    # %.17g round-trips every float64 exactly
    table.to_csv(path, sep="\t", index=False, float_format="%.17g")


def read_km_tsv(path: Path) -> dict[str, KMCurve]:
    try:
        table = pd.read_csv(path, sep="\t", dtype={"group": str}, float_precision="round_trip")
    except FileNotFoundError:
        raise CohortDataError(f"KM table not found: {path}")
    missing = [c for c in KM_COLUMNS if c not in table.columns]
    if missing:
        raise CohortDataError(f"KM table {path.name} is missing columns: {', '.join(missing)}")
    curves: dict[str, KMCurve] = {}
    for group, rows in table.groupby("group", sort=False):
        curves[str(group)] = KMCurve(
            event_times=rows["time"].to_numpy(dtype=np.float64),
            survival_probs=rows["survival"].to_numpy(dtype=np.float64),
            at_risk_counts=rows["at_risk"].to_numpy(dtype=np.int64),
        )
    return curves
