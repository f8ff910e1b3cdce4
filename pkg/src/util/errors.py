"""
Error hierarchy shared by every MurreNet module.

The CLI maps the top-level categories onto process exit codes.
"""
from __future__ import annotations


class MurreNetError(Exception):
    """Base class for all MurreNet errors."""

    exit_code: int = 1


class ConfigError(MurreNetError, ValueError):
    """Invalid or unreadable configuration; the message names the offending field."""

    exit_code = 1


class CohortDataError(MurreNetError, ValueError):
    """Cohort files are missing, malformed, or inconsistent."""

    exit_code = 2


class DiscretizationError(CohortDataError):
    pass


class TrainingError(MurreNetError, RuntimeError):
    """Optimisation failed (non-finite loss, fold failure)."""

    exit_code = 3


class DegenerateStratificationError(MurreNetError, ValueError):
    exit_code = 4


class GradientCheckError(MurreNetError, RuntimeError):
    exit_code = 5


class ShapeError(MurreNetError, ValueError):
    """Tensor shapes or widths do not match the contract."""

    exit_code = 2


class NonFiniteError(MurreNetError, ValueError):
    exit_code = 3


class DegenerateRepresentationError(MurreNetError, ValueError):
    exit_code = 3


class SurvivalMetricError(MurreNetError, ValueError):
    exit_code = 2


class StageError(MurreNetError, RuntimeError):
    """A forward-pass stage failed; wraps the original error with the stage label."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)

    def __reduce__(self):
        return (StageError, (self.stage, self.cause))
