"""
Main entry point and command-line interface for MurreNet.
"""
from __future__ import annotations

import argparse
import logging
import multiprocessing
import sys
from pathlib import Path

from src.app.commands import cmd_ablate, cmd_eval, cmd_gradcheck, cmd_stratify, cmd_synth, cmd_train, report_error
from src.util.context import Context
from src.util.errors import MurreNetError
from src.util.logs import configure_logging


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="murrenet",
        description=f"{Context.Config.get('app', 'name', 'MurreNet')} multimodal survival prediction",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic cohort directory")
    synth.add_argument("--spec", type=Path, help="TOML generator spec ([synthetic] table)")
    synth.add_argument("--out", type=Path, required=True)

    for name, help_text in (("train", "cross-validate one model"), ("ablate", "cross-validate every rung A-F")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=Path, help="run config TOML overlaid on config.toml")
        cmd.add_argument("--cohort", type=Path, required=True)
        cmd.add_argument("--out", type=Path, required=True)
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--jobs", type=int, help="folds trained in parallel")

    for name, help_text in (("eval", "C-index of a checkpoint on a cohort"), ("stratify", "median risk groups, KM curves and log-rank test")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--checkpoint", type=Path, required=True)
        cmd.add_argument("--cohort", type=Path, required=True)
        cmd.add_argument("--out", type=Path, required=True)

    grad = sub.add_parser("gradcheck", help="finite-difference check of the objective's gradients")
    grad.add_argument("--config", type=Path)
    grad.add_argument("--seed", type=int)
    grad.add_argument("--ladder", action="store_true", help="check every rung A-F")
    grad.add_argument("--max-entries", type=int, help="random entries checked per parameter array")
    return parser


def run(argv: list[str] | None = None) -> int:
    """Parse arguments, dispatch to a command and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        configure_logging(logging.DEBUG if args.verbose else logging.INFO)
        if args.command == "synth":
            return cmd_synth(args.spec, args.out)
        if args.command == "train":
            return cmd_train(args.config, args.cohort, args.out, seed=args.seed, jobs=args.jobs)
        if args.command == "ablate":
            return cmd_ablate(args.config, args.cohort, args.out, seed=args.seed, jobs=args.jobs)
        if args.command == "eval":
            return cmd_eval(args.checkpoint, args.cohort, args.out)
        if args.command == "stratify":
            return cmd_stratify(args.checkpoint, args.cohort, args.out)
        return cmd_gradcheck(args.config, seed=args.seed, ladder=args.ladder, max_entries=args.max_entries)
    except MurreNetError as e:
        # config.toml itself is unreadable
        return report_error(e)


def main() -> None:
    # Fold workers start through spawn
    multiprocessing.freeze_support()
    sys.exit(run())


if __name__ == "__main__":
    main()
