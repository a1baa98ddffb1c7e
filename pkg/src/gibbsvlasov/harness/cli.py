"""Command line entry point.

    gibbsvlasov <experiment> [--config path] [--seed n] [--out dir] [--workers k]

Exit codes: 0 when every check passed, 2 when a numerical check failed or
a numerical error stopped the run, 3 when the configuration is invalid.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config, validate
from .experiments import run_experiment
from .outputs import OutputError, emit_outputs

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 2, 3

log = logging.getLogger("gibbsvlasov")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gibbsvlasov", description="Gibbs fluctuation and linearized Vlasov experiments")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="INI file; defaults are used for missing keys")
    p.add_argument("--seed", type=int, help="master seed (overrides [run] seed)")
    p.add_argument("--out", help="output directory (overrides [run] out)")
    p.add_argument("--workers", type=int, help="worker processes (overrides [run] workers)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    run = {"experiment": args.experiment}
    if args.seed is not None:
        run["seed"] = args.seed
    if args.out is not None:
        run["out"] = args.out
    if args.workers is not None:
        run["workers"] = args.workers
    config = config.replace(run=run)
    validate(config)
    return config


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    start = time.perf_counter()
    try:
        result = run_experiment(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    try:
        manifest = emit_outputs(result, config, wall_clock=time.perf_counter() - start)
    except OutputError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAILED
    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"manifest: {manifest}")
    return EXIT_OK if result.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
