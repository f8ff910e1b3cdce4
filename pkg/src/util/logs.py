"""
Logging helpers.
"""
from __future__ import annotations

import logging
from typing import Callable

ProgressCallback = Callable[[str], None]

_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def configure_logging(level: int = logging.INFO) -> None:
    """Configure the root logger once; later calls only adjust the level."""
    root = logging.getLogger()
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(_FORMAT, datefmt="%H:%M:%S"))
        root.addHandler(handler)
    root.setLevel(level)


def progress_logger(logger: logging.Logger, progress_callback: ProgressCallback | None = None) -> ProgressCallback:
    """
    Build a `log(message)` helper that logs and optionally forwards to a progress callback.

    Args:
        logger: Module logger receiving every message at INFO level
        progress_callback: Optional callback (e.g. a CLI printer) for progress updates
    """
    def log(message: str) -> None:
        logger.info(message)
        if progress_callback:
            progress_callback(message)

    return log
