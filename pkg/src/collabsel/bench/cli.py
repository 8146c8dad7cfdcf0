"""Command-line entry point: ``collabsel <experiment> --scenario FILE``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from ..errors import CollabError
from .runner import run
from .scenario import EXPERIMENTS, load_scenario

OUT_ENV_VAR = "COLLABSEL_OUT"
DEFAULT_OUT = "collabsel-out"


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collabsel",
        description="Collaborative-learning incentive experiments.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run a {name} experiment")
        p.add_argument("--scenario", required=True, help="path to a JSON scenario file")
        p.add_argument("--out", default=None,
                       help=f"output directory (default: ${OUT_ENV_VAR} or ./{DEFAULT_OUT})")
        p.add_argument("--seed", type=_u64, default=None, help="override mc.seed")
        p.add_argument("--workers", type=_positive, default=1, help="worker processes")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out or os.environ.get(OUT_ENV_VAR) or DEFAULT_OUT
    try:
        scenario = load_scenario(args.scenario, args.experiment, args.seed)
        files = run(scenario, out, args.workers)
    except CollabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    for name in sorted(files):
        print(os.path.join(out, name))
    return 0


if __name__ == "__main__":
    sys.exit(main())
