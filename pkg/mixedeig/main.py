"""Command-line interface for mixedeig.

Copyright (C) 2025 mixedeig Contributors

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU General Public License as published by
the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.

This program is distributed in the hope that it will be useful,
but WITHOUT ANY WARRANTY; without even the implied warranty of
MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
GNU General Public License for more details.

You should have received a copy of the GNU General Public License
along with this program.  If not, see <https://www.gnu.org/licenses/>.
"""

import argparse
from dataclasses import asdict
import logging
import sys
import traceback
from typing import Sequence

import pandas as pd

from mixedeig import license as license_info
from mixedeig.config import DOMAINS, RunConfig
from mixedeig.constants import DEFAULT_MAX_DOFS, DEFAULT_MAX_ITER, DEFAULT_TOL, ERROR_QUADRATURE_DEGREE
from mixedeig.exceptions import ConfigurationError, MixedEigError
from mixedeig.experiments import (
    format_table,
    rows_to_frame,
    run_lshape_adaptive,
    run_lshape_uniform,
    run_square_study,
    run_superconvergence_check,
    tail_slopes,
    write_csv,
    write_dat,
)
from mixedeig.verification import format_report, run_invariant_suite

logger = logging.getLogger(__name__)

LOG_FORMAT = "[%(asctime)s] %(levelname)-8s %(message)s"
LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"

SQUARE_COLUMNS = (
    "level",
    "n_elements",
    "lambda_star",
    "err_grad_u2",
    "err_sigma_star",
    "eta",
    "hot",
    "err_u2_L2",
    "err_lambda_star",
    "eta_lambda",
    "eff",
)
LSHAPE_COLUMNS = (
    "level",
    "n_elements",
    "n_dofs",
    "lambda_star",
    "err_lambda_star",
    "eta",
    "eta_lambda",
    "eff_lambda",
)
SUPERCONV_COLUMNS = (
    "level",
    "n_elements",
    "lambda_h",
    "superconv_proj_err",
    "aux_proj_err",
    "aux_diff",
    "aux_identity_residual",
)

EPILOG = """
Examples:
  # Uniform refinement of the unit square, order 1, five levels
  mixedeig square --k 1 --levels 5 --out t1.csv

  # Adaptive L-shape study until the number of unknowns exceeds 2e5
  mixedeig lshape --k 2 --max-dofs 200000

  # Uniform L-shape refinement with a gnuplot data file
  mixedeig lshape --k 2 --uniform --levels 5 --dat lshape.dat

  # Superconvergence of u_h and the auxiliary source problem
  mixedeig superconv --k 1 --levels 5

  # Invariant suite on the built-in micro meshes
  mixedeig verify --k 1
  mixedeig verify --k 2 --domain lshape
"""


def _common_arguments() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--k", type=int, default=1, help="Polynomial order k of U_h = P^k (default: 1)")
    common.add_argument(
        "--quad-degree",
        type=int,
        default=ERROR_QUADRATURE_DEGREE,
        dest="quad_degree",
        help=f"Quadrature degree for integrals against the exact solution (default: {ERROR_QUADRATURE_DEGREE})",
    )
    common.add_argument(
        "--tol",
        type=float,
        default=DEFAULT_TOL,
        help=f"Relative tolerance of the inverse power iteration (default: {DEFAULT_TOL:g})",
    )
    common.add_argument(
        "--max-iter",
        type=int,
        default=DEFAULT_MAX_ITER,
        dest="max_iter",
        help=f"Iteration limit of the inverse power iteration (default: {DEFAULT_MAX_ITER})",
    )
    common.add_argument(
        "--out",
        default=None,
        dest="output",
        help="CSV output path (default: <command>_k<k>.csv)",
    )
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log solver diagnostics")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Only log warnings and errors")
    return common


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with the square, lshape, superconv and verify commands."""
    parser = argparse.ArgumentParser(
        prog="mixedeig",
        description="Mixed finite element Laplace eigensolver with post-processing and "
                    "asymptotically exact a posteriori error estimators.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument(
        "--about",
        action="store_true",
        help="Show version, license, and third-party attributions, then exit.",
    )
    common = _common_arguments()
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")

    square = subparsers.add_parser(
        "square", parents=[common], help="Uniform convergence study on the unit square"
    )
    square.add_argument("--levels", type=int, default=5, help="Number of refinement levels (default: 5)")
    square.add_argument("--dat", default=None, dest="dat_path", help="Also write a gnuplot data file")

    lshape = subparsers.add_parser(
        "lshape", parents=[common], help="Adaptive (or uniform) study on the L-shaped domain"
    )
    lshape.add_argument(
        "--max-dofs",
        type=int,
        default=DEFAULT_MAX_DOFS,
        dest="max_dofs",
        help=f"Stop once the number of unknowns exceeds this (default: {DEFAULT_MAX_DOFS})",
    )
    lshape.add_argument("--uniform", action="store_true", help="Refine uniformly instead of adaptively")
    lshape.add_argument("--levels", type=int, default=5, help="Levels of the uniform study (default: 5)")
    lshape.add_argument("--dat", default=None, dest="dat_path", help="Also write a gnuplot data file")

    superconv = subparsers.add_parser(
        "superconv", parents=[common], help="Superconvergence and auxiliary-problem check on the unit square"
    )
    superconv.add_argument("--levels", type=int, default=5, help="Number of refinement levels (default: 5)")

    verify = subparsers.add_parser("verify", parents=[common], help="Run the invariant suite")
    verify.add_argument(
        "--domain",
        choices=DOMAINS,
        default="square",
        help="Micro mesh to verify on; lshape skips exact-solution checks (default: square)",
    )
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    """Configure root logging on stderr."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, datefmt=LOG_DATEFMT, stream=sys.stderr)


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """RunConfig from parsed arguments; raises ConfigurationError on invalid ranges."""
    return RunConfig(
        command=args.command,
        k=args.k,
        levels=getattr(args, "levels", 1),
        max_dofs=getattr(args, "max_dofs", DEFAULT_MAX_DOFS),
        quad_degree=args.quad_degree,
        tol=args.tol,
        max_iter=args.max_iter,
        output=args.output,
        dat_path=getattr(args, "dat_path", None),
        domain=getattr(args, "domain", "square"),
        uniform=getattr(args, "uniform", False),
        verbose=args.verbose,
    )


def _run_verify(config: RunConfig) -> int:
    results = run_invariant_suite(
        config.k, config.domain, quad_degree=config.quad_degree, tol=config.tol, max_iter=config.max_iter
    )
    print(format_report(results))
    frame = pd.DataFrame([asdict(result) | {"passed": result.passed} for result in results])
    path = write_csv(frame, config.output)
    logger.info("Wrote %s", path)
    return 0 if all(result.passed for result in results) else 1


def run(config: RunConfig) -> int:
    """Execute one configured command; returns the exit code."""
    if config.command == "verify":
        return _run_verify(config)

    slopes = None
    if config.command == "square":
        rows = run_square_study(config.k, config.levels, config.tol, config.max_iter, config.quad_degree)
        frame = rows_to_frame(rows, with_rates=True)
        columns = SQUARE_COLUMNS
    elif config.command == "superconv":
        rows = run_superconvergence_check(config.k, config.levels, config.tol, config.max_iter, config.quad_degree)
        frame = rows_to_frame(rows, with_rates=True)
        columns = SUPERCONV_COLUMNS
    elif config.uniform:
        rows = run_lshape_uniform(config.k, config.levels, config.tol, config.max_iter)
        frame = rows_to_frame(rows, with_rates=True)
        columns = LSHAPE_COLUMNS
    else:
        rows = run_lshape_adaptive(config.k, config.max_dofs, config.tol, config.max_iter)
        frame = rows_to_frame(rows)
        columns = LSHAPE_COLUMNS
        slopes = tail_slopes(rows)

    path = write_csv(frame, config.output)
    print(format_table(frame, columns))
    if slopes is not None:
        print()
        print("Log-log slopes against N over the second half of the iterations:")
        for name, slope in slopes.items():
            print(f"  {name:<16s} {slope:+.3f}")
        logger.info(
            "Singular-solution slopes expected near %.1f (eta) and %.1f (|lambda - lambda_h*|)",
            -(config.k + 2) / 2, -(config.k + 2),
        )
    if config.dat_path is not None:
        logger.info("Wrote %s", write_dat(rows, config.dat_path))
    logger.info("Wrote %s", path)
    return 0


def parse_and_run(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run the command and map failures to exit codes.

    Returns:
        0 on success, 1 on numerical failure or a failed check, 2 on usage errors.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2

    if args.about:
        print(license_info.format_about_text())
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("Error: a command is required", file=sys.stderr)
        return 2

    try:
        config = config_from_args(args)
    except ConfigurationError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2

    configure_logging(config.verbose, args.quiet)
    try:
        return run(config)
    except ConfigurationError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
    except MixedEigError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"Unexpected error: {e}", file=sys.stderr)
        traceback.print_exc()
        return 1


def main() -> None:
    """Main entry point."""
    sys.exit(parse_and_run(sys.argv[1:]))


if __name__ == "__main__":
    main()
