#!/usr/bin/env python3
"""
Command-line interface for the freshness_mdp package.
"""
import argparse
import contextlib
import sys
from typing import IO, Any, Dict, Iterator, List, Optional

from . import __version__
from .config import load_spec
from .exceptions import (
    ConfigurationError,
    FreshnessMdpError,
    NonConvergenceError,
    ParseError,
    SearchError,
    ValidationError,
)
from .experiments import run_experiment
from .serializers import to_json
from .utils import configure_logging, log_to_json

FAMILIES = {
    "aoii-sweep-alpha": "Single-rate AoII vs. the update budget alpha",
    "aoii-sweep-pr": "Single-rate AoII vs. the source persistence pR",
    "aoi2-sweep-q": "Two-rate AoI vs. the request probability q",
    "aoi2-sweep-alphamax": "Two-rate AoI vs. the request-slot rate cap alpha_max",
    "aoi2-gap-bmax": "Optimality gap of the token policy vs. the bucket size",
    "solve": "Solve one instance and print its policy table",
    "simulate": "Simulate one instance under each method",
}

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2
EXIT_NONCONVERGENCE = 3
EXIT_SEARCH = 4


def _int_list(text: str) -> List[int]:
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def parse_args(args: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command-line arguments.

    Args:
        args: Command-line arguments (defaults to sys.argv[1:])

    Returns:
        Parsed arguments
    """
    parser = argparse.ArgumentParser(
        description="Freshness-optimal update scheduling under rate constraints",
        prog="freshness-mdp"
    )

    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__}"
    )

    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default="INFO",
        help="Set the logging level"
    )

    parser.add_argument(
        "--log-file",
        help="Also write log records to this file"
    )

    subparsers = parser.add_subparsers(
        dest="command",
        help="Experiment family to run"
    )

    for family, help_text in FAMILIES.items():
        sub = subparsers.add_parser(family, help=help_text)
        sub.add_argument("--config", help="Path to a key = value configuration file")
        sub.add_argument("--bmax", type=_int_list, help="Bucket sizes, e.g. 5,10,20")
        sub.add_argument("--seed", type=int, help="Master seed of the simulations")
        sub.add_argument("--out", help="CSV output path (defaults to stdout)")
        sub.add_argument("--trace-out", help="CSV path for search or simulation traces")
        sub.add_argument("--epsV", type=float, help="RVIA span tolerance")
        sub.add_argument("--epsLambda", type=float, help="Multiplier search tolerance")
        sub.add_argument("--gamma", type=float, help="Multiplier scaling step")
        sub.add_argument("--T", type=int, help="Simulation horizon in slots")
        sub.add_argument("--runs", type=int, help="Number of simulation runs")
        sub.add_argument("--workers", type=int, help="Grid points solved concurrently")

    return parser.parse_args(args)


def overrides_from_args(parsed_args: argparse.Namespace) -> Dict[str, Any]:
    """Flag values keyed by configuration key; unset flags are omitted."""
    values = {
        "family": parsed_args.command,
        "bmax": parsed_args.bmax,
        "seed": parsed_args.seed,
        "out": parsed_args.out,
        "trace_out": parsed_args.trace_out,
        "epsV": parsed_args.epsV,
        "epsLambda": parsed_args.epsLambda,
        "gamma": parsed_args.gamma,
        "T": parsed_args.T,
        "runs": parsed_args.runs,
        "workers": parsed_args.workers,
    }
    return {k: v for k, v in values.items() if v is not None}


@contextlib.contextmanager
def _open_output(path: Optional[str]) -> Iterator[IO[str]]:
    if path is None:
        yield sys.stdout
        return
    with open(path, "w", encoding="utf-8", newline="") as handle:
        yield handle


def exit_code_for(error: FreshnessMdpError) -> int:
    """Map a package error to the documented exit code."""
    if isinstance(error, (ValidationError, ParseError, ConfigurationError)):
        return EXIT_INVALID
    if isinstance(error, NonConvergenceError):
        return EXIT_NONCONVERGENCE
    if isinstance(error, SearchError):
        return EXIT_SEARCH
    return EXIT_ERROR


def main(args: Optional[List[str]] = None) -> int:
    """
    Main entry point for the CLI.

    CSV goes to --out or stdout and log records to stderr. With --out the
    JSON summary is printed to stdout.

    Args:
        args: Command-line arguments (defaults to sys.argv[1:])

    Returns:
        Exit code: 0 success, 2 invalid input, 3 non-convergence,
        4 failed multiplier search, 1 any other error
    """
    parsed_args = parse_args(args)

    if not parsed_args.command:
        print("Error: No command specified. Use --help for usage information.",
              file=sys.stderr)
        return EXIT_ERROR

    configure_logging(level=parsed_args.log_level, log_file=parsed_args.log_file)

    try:
        spec = load_spec(parsed_args.config, overrides_from_args(parsed_args))
        with _open_output(spec.out) as out:
            if spec.trace_out:
                with _open_output(spec.trace_out) as trace_out:
                    summary = run_experiment(spec, out, trace_out)
            else:
                summary = run_experiment(spec, out)
    except FreshnessMdpError as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        return exit_code_for(e)
    except OSError as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        return EXIT_ERROR

    if spec.out is not None:
        print(to_json(summary, pretty=True, sort_keys=True))
    else:
        log_to_json("summary", **summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
