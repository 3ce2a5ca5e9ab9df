#!/usr/bin/env python3
"""CLI entry point for the elliptic determinant verifier.

Runs seeded verification campaigns over one identity at a time and writes a
JSON, CSV or human-readable report to stdout. Log records go to stderr.

Usage:
    python -m src.main verify --identity dt --n 1..6 --trials 100
    python -m src.main orbit --n 4 --trials 50
    python -m src.main selftest --trials 1000

Exit status: 0 all pass, 1 any failure, 2 usage or configuration error,
3 sampler exhaustion.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Any, Dict, Optional, Sequence, Tuple

from src.campaign.runner import (
    CampaignResult,
    CampaignSpecError,
    Identity,
    OutputFormat,
    cmd_orbit,
    cmd_selftest,
    cmd_verify,
    make_spec,
    render,
)
from src.campaign.sampling import SamplerExhaustedError
from src.config import ConfigError, Settings, load_settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_EXHAUSTED = 3

LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(message)s"
LOG_DATEFMT = "%H:%M:%S"


def configure_logging(quiet: bool = False, verbose: bool = False) -> None:
    """Configure root logging once for the CLI."""
    level = logging.INFO
    if quiet:
        level = logging.WARNING
    if verbose:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, datefmt=LOG_DATEFMT, force=True)


def parse_n_range(text: str) -> Tuple[int, int]:
    """'3' -> (3, 3); '1..6' -> (1, 6)."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return int(lo), int(hi)
        value = int(text)
        return value, value
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or LO..HI, got {text!r}") from None


def parse_m_list(text: str) -> Tuple[int, ...]:
    """'2,1,3' -> (2, 1, 3)."""
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_common(parser: argparse.ArgumentParser, settings: Settings, default_n: str) -> None:
    parser.add_argument("--n", type=parse_n_range, default=parse_n_range(default_n),
                        help=f"matrix order or inclusive range LO..HI (default {default_n})")
    parser.add_argument("--trials", type=int, default=1, help="trials per order (default 1)")
    parser.add_argument("--prec", type=int, default=settings.precision_bits,
                        help=f"precision in bits (default {settings.precision_bits})")
    parser.add_argument("--guard", type=int, default=settings.guard_bits,
                        help=f"guard bits (default {settings.guard_bits})")
    parser.add_argument("--tol", type=float, default=settings.tolerance,
                        help=f"relative tolerance (default {settings.tolerance:g})")
    parser.add_argument("--seed", type=int, default=settings.seed,
                        help=f"base seed; trial t uses seed + t (default {settings.seed})")
    parser.add_argument("--p-max", type=float, default=settings.p_max,
                        help=f"largest nome modulus sampled (default {settings.p_max})")
    parser.add_argument("--out", choices=[f.value for f in OutputFormat], default=OutputFormat.JSON.value,
                        help="report format (default json)")
    parser.add_argument("--workers", type=int, default=settings.workers,
                        help="worker processes (default: one per CPU for selftest, 1 otherwise)")
    parser.add_argument("--no-timing", action="store_true",
                        help="report wall_time_ms as 0 so identical seeds give identical bytes")
    parser.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    parser.add_argument("--verbose", action="store_true", help="log every trial")


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m src.main",
        description="Elliptic determinant identities - randomized high-precision verification",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m src.main verify --identity jackson --n 0..8 --trials 50
  python -m src.main verify --identity dt --n 1..6 --trials 100 --prec 256 --tol 1e-35
  python -m src.main verify --identity cnt --n 3 --m 2,1,3 --trials 25
  python -m src.main verify --identity tdt --n 1..8 --trials 100 --out csv
  python -m src.main orbit --n 4 --trials 50 --out human
  python -m src.main selftest --trials 1000 --seed 7 --no-timing
        """,
    )
    commands = parser.add_subparsers(dest="command", required=True)

    verify = commands.add_parser("verify", help="verify one identity on random parameters")
    verify.add_argument("--identity", required=True, choices=[i.value for i in Identity],
                        help="identity to verify")
    verify.add_argument("--m", type=parse_m_list, default=None,
                        help="summation bounds for cnt, one per row (default 2,1,3 repeated)")
    _add_common(verify, settings, "1")

    orbit = commands.add_parser("orbit", help="group laws and six-way orbit consistency")
    _add_common(orbit, settings, "1")

    selftest = commands.add_parser("selftest", help="theta, factorial and determinant oracles")
    _add_common(selftest, settings, "3")
    return parser


def resolve_workers(command: str, requested: Optional[int]) -> int:
    """Explicit value, else one worker per CPU for selftest and 1 for the rest."""
    if requested is not None:
        return requested
    if command == "selftest":
        return os.cpu_count() or 1
    return 1


def spec_values(args: argparse.Namespace) -> Dict[str, Any]:
    identity = {
        "orbit": Identity.ORBIT.value,
        "selftest": Identity.THETA_SELFTEST.value,
    }.get(args.command, getattr(args, "identity", None))
    n_lo, n_hi = args.n
    return {
        "identity": identity,
        "n_lo": n_lo,
        "n_hi": n_hi,
        "trials": args.trials,
        "m": getattr(args, "m", None),
        "precision_bits": args.prec,
        "guard_bits": args.guard,
        "tolerance": args.tol,
        "seed": args.seed,
        "p_max": args.p_max,
        "output": args.out,
        "workers": resolve_workers(args.command, args.workers),
        "record_timing": not args.no_timing,
    }


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit status."""
    try:
        settings = load_settings()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    parser = build_parser(settings)
    args = parser.parse_args(argv)
    configure_logging(quiet=args.quiet, verbose=args.verbose)

    commands = {"verify": cmd_verify, "orbit": cmd_orbit, "selftest": cmd_selftest}
    try:
        spec = make_spec(**spec_values(args))
        result: CampaignResult = commands[args.command](spec)
    except CampaignSpecError as exc:
        print(f"error: invalid campaign: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SamplerExhaustedError as exc:
        logger.error("%s", exc)
        return EXIT_EXHAUSTED

    sys.stdout.write(render(result))
    sys.stdout.flush()
    if result.fail_count:
        logger.warning("%d of %d trials failed", result.fail_count, len(result.results))
    return EXIT_FAILURE if result.fail_count else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
