"""Command-line entry point: ``vfl-shield run | sweep | pdmatrix``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from vfl_shield.errors import ConfigError, VflShieldError
from vfl_shield.harness.config import load_config
from vfl_shield.harness.experiment import emit_pd_matrix, run_experiment
from vfl_shield.harness.sweep import load_grid, run_sweep

logger = logging.getLogger("vfl_shield")

EXIT_FAILURE = 1
EXIT_CONFIG = 2


def configure_logging(level: str = "INFO") -> None:
    """Send library logs to stderr at ``level``."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with one subcommand per entry point."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON experiment config")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="PATH=VALUE",
        help="Override a config field, e.g. --set defense.mode=coae (repeatable)",
    )
    common.add_argument(
        "--out",
        default=os.getenv("VFL_SHIELD_OUT_DIR", "results"),
        help="Output directory (default: $VFL_SHIELD_OUT_DIR or ./results)",
    )
    common.add_argument(
        "--log-level",
        default=os.getenv("VFL_SHIELD_LOG_LEVEL", "INFO"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default: INFO)",
    )

    parser = argparse.ArgumentParser(
        prog="vfl-shield",
        description="Simulate label inference and backdoor attacks on vertical FL, "
        "with and without label-disguise defenses",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="Run one experiment")
    run.add_argument("--progress", action="store_true", help="Show a progress bar")

    sweep = sub.add_parser("sweep", parents=[common], help="Run a grid of experiments")
    sweep.add_argument(
        "--grid", required=True, help="JSON object of dotted paths to value lists"
    )
    sweep.add_argument("--repeats", type=int, default=None, help="Runs per grid point")
    sweep.add_argument(
        "--workers", type=int, default=1, help="Worker processes (default: 1)"
    )
    sweep.add_argument("--progress", action="store_true", help="Show a progress bar")

    sub.add_parser(
        "pdmatrix",
        parents=[common],
        help="Tabulate restored labels under the CoAE defense",
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments and dispatch; returns the process exit code."""
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    try:
        config = load_config(args.config, args.overrides)
        if args.command == "run":
            rows = run_experiment(config, args.out, show_progress=args.progress)
            final = rows[-1]
            logger.info(
                "final main accuracy %.4f, backdoor accuracy %.4f",
                final.main_accuracy,
                final.backdoor_accuracy,
            )
        elif args.command == "sweep":
            grid = load_grid(args.grid)
            _, summary = run_sweep(
                config,
                grid,
                repeats=args.repeats,
                out_dir=args.out,
                workers=args.workers,
                show_progress=args.progress,
            )
            logger.info("sweep finished: %d summary rows", len(summary))
        else:
            result = emit_pd_matrix(config, args.out)
            logger.info("PD matrix sparsity %.3f", result.sparsity())
    except ConfigError as exc:
        logger.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except VflShieldError as exc:
        logger.error("%s", exc)
        return EXIT_FAILURE
    logger.info("outputs written to %s", args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
