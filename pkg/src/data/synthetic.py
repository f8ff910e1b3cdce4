"""
Synthetic cohorts with planted shared and modality-specific risk signals.
"""
from __future__ import annotations

import logging
from dataclasses import fields
from pathlib import Path
from typing import Any
from tomllib import load as tomlload, TOMLDecodeError

import numpy as np

from .cohort_types import Cohort, PatientRecord, SyntheticLatents, SyntheticSpec
from src.util.context import Context
from src.util.errors import ConfigError

logger = logging.getLogger(__name__)

# Log-hazard weight applied to every latent factor
RISK_WEIGHT = 0.7


def _unit_vector(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Cohort, SyntheticLatents]:
    """
    Draw a cohort together with the latents that produced it.

    Pathology rows are noise plus (shared·z_shared + specific_p·z_p)·u_p; genomic rows
    analogously along u_g. Event times are exponential with rate
    exp(0.7·(z_shared + z_p + z_g)); censored patients get a uniform fraction of their
    event time.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_patients

    u_p = _unit_vector(rng, spec.d_in_p)
    u_g = _unit_vector(rng, spec.d_in_g)
    z_shared = rng.standard_normal(n)
    z_p = rng.standard_normal(n)
    z_g = rng.standard_normal(n)

    rate = np.exp(RISK_WEIGHT * (z_shared + z_p + z_g))
    event_times = rng.exponential(1.0 / rate)
    censored = rng.random(n) < spec.censor_rate
    fractions = rng.random(n)
    recorded = np.where(censored, event_times * fractions, event_times)
    # uniform(0, t) can return exactly 0; survival times must stay positive
    recorded = np.maximum(recorded, np.finfo(np.float64).tiny)

    lo, hi = spec.n_p_range
    n_tokens = rng.integers(lo, hi + 1, size=n)

    patients: list[PatientRecord] = []
    for i in range(n):
        path_signal = spec.shared_signal_strength * z_shared[i] + spec.specific_signal_strength_p * z_p[i]
        gen_signal = spec.shared_signal_strength * z_shared[i] + spec.specific_signal_strength_g * z_g[i]
        path = spec.noise_sigma * rng.standard_normal((int(n_tokens[i]), spec.d_in_p)) + path_signal * u_p
        gen = spec.noise_sigma * rng.standard_normal((spec.n_groups, spec.d_in_g)) + gen_signal * u_g
        patients.append(PatientRecord(
            patient_id=f"SYN-{i:05d}",
            pathology_tokens=path.astype(np.float32),
            genomic_groups=gen.astype(np.float32),
            survival_time=float(recorded[i]),
            event_observed=not bool(censored[i]),
        ))

    logger.debug("generated %d synthetic patients (%d censored)", n, int(censored.sum()))
    latents = SyntheticLatents(
        z_shared=z_shared, z_p=z_p, z_g=z_g, event_times=event_times, u_p=u_p, u_g=u_g,
    )
    return Cohort(patients=tuple(patients)), latents


def make_synthetic_cohort(spec: SyntheticSpec) -> Cohort:
    cohort, _ = generate_synthetic(spec)
    return cohort


def synthetic_spec_from_mapping(values: dict[str, Any]) -> SyntheticSpec:
    """Build a SyntheticSpec from config-style keys (n_p_min/n_p_max instead of a tuple)."""
    values = dict(values)
    known = {f.name for f in fields(SyntheticSpec)} | {"n_p_min", "n_p_max"}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"synthetic.{unknown[0]}: unknown key")

    lo = values.pop("n_p_min", None)
    hi = values.pop("n_p_max", None)
    if lo is not None or hi is not None:
        default_lo, default_hi = SyntheticSpec().n_p_range
        values["n_p_range"] = (int(lo if lo is not None else default_lo), int(hi if hi is not None else default_hi))

    for f in fields(SyntheticSpec):
        if f.name not in values or f.name == "n_p_range":
            continue
        value = values[f.name]
        expected = int if f.name in ("n_patients", "d_in_p", "d_in_g", "n_groups", "seed") else float
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"synthetic.{f.name}: expected a number, got {value!r}")
        if expected is int and not isinstance(value, int):
            raise ConfigError(f"synthetic.{f.name}: expected an integer, got {value!r}")
        values[f.name] = expected(value)
    return SyntheticSpec(**values)


def load_synthetic_spec(path: Path | None) -> SyntheticSpec:
    """
    Load a generator spec: config.toml [synthetic] defaults overlaid with a user TOML file.

    The user file may put its keys in a [synthetic] table or at the top level.
    """
    merged = Context.Config.get_section("synthetic")
    if path is not None:
        try:
            with open(path, "rb") as f:
                raw = tomlload(f)
        except FileNotFoundError:
            raise ConfigError(f"synthetic spec not found: {path}")
        except TOMLDecodeError as e:
            raise ConfigError(f"synthetic spec {path} is not valid TOML: {e}")
        merged.update(raw.get("synthetic", raw))
    return synthetic_spec_from_mapping(merged)
