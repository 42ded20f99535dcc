"""Command-line entry point: ``thermistor-lab run|validate|sweep``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import parse_config
from .errors import ConfigError
from .runner import EXIT_CONFIG, OUTPUT_ENV, RunResult, _error_summary, resolve_output_dir, run, sweep, write_summary


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thermistor-lab",
                                     description="Nonlocal p-Laplacian heat equation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured experiment")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--out", help=f"output directory (default: config, then ${OUTPUT_ENV})")
    p_run.add_argument("--jobs", type=int, default=1, help="worker processes for multi-run experiments")
    p_run.add_argument("--seed", type=int, help="override every random seed in the config")

    p_val = sub.add_parser("validate", help="check a config and print its effective form")
    p_val.add_argument("config", type=Path)

    p_sweep = sub.add_parser("sweep", help="run the sweep axes of a config")
    p_sweep.add_argument("config", type=Path)
    p_sweep.add_argument("--out")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--seed", type=int)
    return parser


def _load(path: Path):
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", "document") from None
    return parse_config(text)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _load(args.config)
        if getattr(args, "seed", None) is not None:
            config = config.with_seed(args.seed)
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs must be at least 1", "jobs")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        if args.command != "validate":
            out = resolve_output_dir(None, args.out)
            write_summary(out, {"exit_status": EXIT_CONFIG, "status": "failed", "error": _error_summary(exc)})
        return EXIT_CONFIG

    if args.command == "validate":
        print(config.to_json())
        return 0
    runner = sweep if args.command == "sweep" else run
    result: RunResult = runner(config, args.out, args.jobs)
    print(f"{result.summary.get('experiment')}: {result.summary.get('status')} "
          f"(exit {result.exit_status}) -> {result.out_dir}")
    if result.summary.get("error"):
        print(f"error: {result.summary['error']['message']}", file=sys.stderr)
    return result.exit_status


if __name__ == "__main__":
    sys.exit(main())
