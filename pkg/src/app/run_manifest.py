"""
Run records: the reproducibility manifest and the deterministic metrics file.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from src.util.context import Context

MANIFEST_FILE = "run_manifest.json"
METRICS_FILE = "metrics.json"


def write_json(path: Path, payload: Any) -> Path:
    """Sorted keys and a trailing newline, so equal payloads give equal bytes."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


@dataclass
class RunManifest:
    """What a command ran with and what it wrote; wall-clock fields live only here."""
    command: str
    config_path: str | None = None
    config: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    cohort_fingerprint: str | None = None
    outputs: list[str] = field(default_factory=list)
    metrics: dict[str, Any] = field(default_factory=dict)
    started: float = field(default_factory=time.time)
    wall_clock_seconds: float = 0.0

    def add_outputs(self, out_dir: Path, paths: list[Path]) -> None:
        for path in paths:
            try:
                self.outputs.append(path.relative_to(out_dir).as_posix())
            except ValueError:
                self.outputs.append(path.as_posix())

    def write(self, out_dir: Path) -> Path:
        self.wall_clock_seconds = time.time() - self.started
        return write_json(out_dir / MANIFEST_FILE, {
            "app": Context.Config.get("app", "name", "MurreNet"),
            "version": Context.Config.get("app", "version", "0.0.0"),
            "command": self.command,
            "config_path": self.config_path,
            "config": self.config,
            "seed": self.seed,
            "cohort_fingerprint": self.cohort_fingerprint,
            "outputs": sorted(self.outputs),
            "metrics": self.metrics,
            "started_unix": self.started,
            "wall_clock_seconds": self.wall_clock_seconds,
        })
