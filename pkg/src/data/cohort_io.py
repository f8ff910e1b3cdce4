"""
Cohort directory contract: manifest.tsv plus one feature binary per patient and modality.

Feature binaries hold a little-endian int32 (rows, cols) header followed by rows*cols
little-endian float32 values in row-major order.
"""
from __future__ import annotations

import hashlib
import logging
from pathlib import Path
from typing import Any, Callable, TypeVar

import numpy as np
import pandas as pd

from .cohort_types import Cohort, PatientRecord
from src.util.errors import CohortDataError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"
MANIFEST_COLUMNS = ["patient_id", "survival_time", "event_observed", "pathology_file", "genomics_file"]

_HEADER_DTYPE = np.dtype("<i4")
_VALUE_DTYPE = np.dtype("<f4")

T = TypeVar("T")


def write_features(path: Path, matrix: np.ndarray) -> None:
    """Write a 2-D matrix in the float32 binary feature format."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise CohortDataError(f"feature matrix must be 2-D, got shape {matrix.shape}")
    header = np.array(matrix.shape, dtype=_HEADER_DTYPE)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(matrix, dtype=_VALUE_DTYPE).tobytes())


def read_features(path: Path) -> np.ndarray:
    """Read a feature binary back into a native float32 (rows, cols) array."""
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise CohortDataError(f"feature file not found: {path}")
    if len(data) < 2 * _HEADER_DTYPE.itemsize:
        raise CohortDataError(f"feature file {path.name} is truncated (no header)")
    rows, cols = (int(v) for v in np.frombuffer(data[:8], dtype=_HEADER_DTYPE))
    if rows < 1 or cols < 1:
        raise CohortDataError(f"feature file {path.name} declares invalid shape ({rows}, {cols})")
    values = np.frombuffer(data[8:], dtype=_VALUE_DTYPE)
    if values.size != rows * cols:
        raise CohortDataError(
            f"feature file {path.name}: header says {rows}x{cols} = {rows * cols} values, found {values.size}"
        )
    return values.reshape(rows, cols).astype(np.float32)


def _manifest_value(row: Any, column: str, cast: Callable[[Any], T]) -> T:
    value = getattr(row, column)
    try:
        return cast(value)
    except (TypeError, ValueError, OverflowError):
        raise CohortDataError(f"patient {row.patient_id}: {column} is not a number, got {value!r}")


def read_cohort(cohort_dir: Path) -> Cohort:
    """
    Load a cohort directory.

    Raises:
        CohortDataError: If the manifest or any referenced file is missing or malformed
    """
    manifest_path = cohort_dir / MANIFEST_NAME
    if not manifest_path.exists():
        raise CohortDataError(f"{MANIFEST_NAME} not found in {cohort_dir}")
    try:
        table = pd.read_csv(
            manifest_path,
            sep="\t",
            dtype={"patient_id": str, "pathology_file": str, "genomics_file": str},
            float_precision="round_trip",
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise CohortDataError(f"{MANIFEST_NAME} could not be parsed: {e}")

    missing = [c for c in MANIFEST_COLUMNS if c not in table.columns]
    if missing:
        raise CohortDataError(f"{MANIFEST_NAME} is missing columns: {', '.join(missing)}")
    if table.empty:
        raise CohortDataError(f"{MANIFEST_NAME} lists no patients")

    patients: list[PatientRecord] = []
    for row in table.itertuples(index=False):
        event = _manifest_value(row, "event_observed", int)
        if event not in (0, 1):
            raise CohortDataError(f"patient {row.patient_id}: event_observed must be 0 or 1, got {row.event_observed}")
        patients.append(PatientRecord(
            patient_id=str(row.patient_id),
            pathology_tokens=read_features(cohort_dir / str(row.pathology_file)),
            genomic_groups=read_features(cohort_dir / str(row.genomics_file)),
            survival_time=_manifest_value(row, "survival_time", float),
            event_observed=bool(event),
        ))

    logger.debug("read %d patients from %s", len(patients), cohort_dir)
    return Cohort(patients=tuple(patients))


def write_cohort(cohort: Cohort, cohort_dir: Path) -> list[Path]:
    """Write a cohort directory and return every file written."""
    features_dir = cohort_dir / "features"
    features_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    written: list[Path] = []
    for p in cohort.patients:
        path_rel = f"features/{p.patient_id}.pathology.bin"
        gen_rel = f"features/{p.patient_id}.genomics.bin"
        write_features(cohort_dir / path_rel, p.pathology_tokens)
        write_features(cohort_dir / gen_rel, p.genomic_groups)
        written += [cohort_dir / path_rel, cohort_dir / gen_rel]
        rows.append({
            "patient_id": p.patient_id,
            "survival_time": p.survival_time,
            "event_observed": int(p.event_observed),
            "pathology_file": path_rel,
            "genomics_file": gen_rel,
        })

    manifest_path = cohort_dir / MANIFEST_NAME
    pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(manifest_path, sep="\t", index=False, float_format="%.17g")
    written.insert(0, manifest_path)
    return written


def cohort_fingerprint(cohort_dir: Path) -> str:
    """SHA-256 over the manifest and every file it references, in manifest order."""
    manifest_path = cohort_dir / MANIFEST_NAME
    if not manifest_path.exists():
        raise CohortDataError(f"{MANIFEST_NAME} not found in {cohort_dir}")
    digest = hashlib.sha256(manifest_path.read_bytes())
    table = pd.read_csv(manifest_path, sep="\t", dtype=str)
    for column in ("pathology_file", "genomics_file"):
        if column not in table.columns:
            raise CohortDataError(f"{MANIFEST_NAME} is missing columns: {column}")
    for path_rel, gen_rel in zip(table["pathology_file"], table["genomics_file"]):
        for rel in (path_rel, gen_rel):
            try:
                digest.update((cohort_dir / rel).read_bytes())
            except FileNotFoundError:
                raise CohortDataError(f"feature file not found: {cohort_dir / rel}")
    return digest.hexdigest()
