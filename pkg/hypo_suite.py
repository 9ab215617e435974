#!/usr/bin/env python3
"""
Hypocoercivity test suite.

Runs kinetic and space-homogeneous relaxations towards a sub-exponential
equilibrium, computes the spectral constants and audits every inequality
of the decay estimate. Exit code 0 means every audit passed.
"""

import argparse
import sys
from typing import Optional, Sequence

from dotenv import load_dotenv

from backend.errors import AuditFailure, ConfigError, DomainError, ShapeError, SuiteError, TruncationError
from backend.services.config_loader import parse_config, with_overrides
from backend.suite_core import HypoSuite
from models import ExperimentResult

# Load environment variables
load_dotenv()

SUBCOMMANDS = {
    "simulate": "kinetic",
    "homogeneous": "homogeneous",
    "spectral": "spectral",
    "sweep": "rates-sweep",
    "audit": "audit",
}
EXIT_OK = 0
EXIT_AUDIT = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="experiment file (.cfg)")
    common.add_argument("--out", metavar="DIR", help="output directory, overrides [outputs] directory")
    common.add_argument("--seed", type=int, metavar="N", help="seed of the random audit batteries")
    common.add_argument(
        "--check-only",
        action="store_true",
        help="run the random-field and operator audits without time integration",
    )
    common.add_argument("--no-progress", action="store_true", help="hide progress bars")

    parser = argparse.ArgumentParser(prog="hypo_suite", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="kinetic run on the torus")
    sub.add_parser("homogeneous", parents=[common], help="space-homogeneous relaxation")
    sub.add_parser("spectral", parents=[common], help="weighted Poincare constants")
    sub.add_parser("sweep", parents=[common], help="kinetic runs over k or alpha")
    sub.add_parser("audit", parents=[common], help="random-field and operator audits")
    return parser


def exit_code_for(exc: Exception) -> int:
    if isinstance(exc, AuditFailure):
        return EXIT_AUDIT
    if isinstance(exc, (ConfigError, DomainError, TruncationError, ShapeError, OSError)):
        return EXIT_CONFIG
    return EXIT_NUMERIC


def print_summary(result: ExperimentResult) -> None:
    print("=" * 50)
    print(f"[{result.mode}] summary")
    for key, value in result.summary.items():
        if isinstance(value, dict):
            continue
        print(f"  {key}: {value}")
    print(f"[{result.mode}] wrote {len(result.files)} files")
    for path in result.files:
        print(f"  {path}")
    print("=" * 50, flush=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    mode = "audit" if args.check_only else SUBCOMMANDS[args.command]

    try:
        cfg = with_overrides(parse_config(args.config), mode=mode, seed=args.seed, out_dir=args.out)
        print("=" * 50)
        print(f"[config] {args.config}: mode={cfg.mode} alpha={cfg.alpha:g} beta={cfg.beta:g} k={cfg.k:g}")
        print(f"[config] collision={cfg.collision.kind} seed={cfg.seed} out={cfg.outputs.directory}")
        print("=" * 50, flush=True)

        result = HypoSuite(cfg, progress=False if args.no_progress else None).run()
        print_summary(result)
        if not result.passed:
            raise AuditFailure(result.failures)
    except (SuiteError, OSError) as exc:
        print(f"[error] {exc}", file=sys.stderr, flush=True)
        return exit_code_for(exc)

    print(f"[{result.mode}] all audits passed", flush=True)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
