"""Batch command-line front-end.

Subcommands: ``phantom`` (generate a target field), ``init`` (compute the
initial sinogram), ``run`` (full optimization), ``sweep`` (one run per
parameter value), ``metrics`` (evaluate metrics on existing field files).
Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

from . import runner
from .config import ConfigError, RunConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to the key=value config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--threads", type=int, default=1,
        help="worker hint; the pipeline is single-threaded and deterministic "
             "regardless (kept for interface stability)",
    )
    parser.add_argument(
        "--seed", type=int, default=0,
        help="seed for auxiliary random-field utilities; the optimization "
             "pipeline itself is deterministic",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vamplan",
        description="Sinogram optimization for tomographic volumetric printing",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("phantom", "generate the configured target field"),
        ("init", "compute the initial sinogram only"),
        ("run", "run one optimization end to end"),
        ("sweep", "run the configured parameter sweep"),
        ("metrics", "evaluate metrics on existing field files"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        cfg.entries.setdefault("seed", str(args.seed))
        if args.command == "phantom":
            runner.run_phantom(cfg, args.out)
        elif args.command == "init":
            runner.run_init(cfg, args.out)
        elif args.command == "run":
            record = runner.run_single(cfg, args.out)
            print(f"terminated: {record.termination} after {record.iterations} steps, "
                  f"final loss {record.final_loss:.6g}")
        elif args.command == "sweep":
            summary = runner.run_sweep(cfg, args.out)
            print(f"sweep summary written to {summary}")
        elif args.command == "metrics":
            rows = runner.run_metrics(cfg, args.out)
            for row in rows:
                print(f"{row.name} = {row.value:.6g}" + (f" [{row.flags}]" if row.flags else ""))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, MemoryError, ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
