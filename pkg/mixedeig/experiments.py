"""Convergence studies: uniform refinement of the unit square, adaptive and uniform refinement of the L-shape, and the superconvergence harness.

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

from dataclasses import asdict, dataclass, fields
import logging
import math
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from mixedeig.assembly import assemble
from mixedeig.constants import (
    CSV_FLOAT_FORMAT,
    DEFAULT_MAX_DOFS,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    ERROR_QUADRATURE_DEGREE,
    LSHAPE_INITIAL_N,
    MARKING_FRACTION,
    ROUNDING_FLOOR,
    SQUARE_INITIAL_N,
)
from mixedeig.eigensolve import MixedEigenSolution, align_sign, solve_eigenpair, solve_source
from mixedeig.estimator import (
    EstimatorReport,
    ExactSolution,
    estimate,
    lshape_reference,
    unit_square_solution,
)
from mixedeig.femcore import project
from mixedeig.mesh import Mesh, make_lshape, make_unit_square, refine_adaptive, refine_uniform
from mixedeig.postprocess import PostProcessed, postprocess

logger = logging.getLogger(__name__)


@dataclass
class ConvergenceRow:
    """One refinement level (uniform) or iteration (adaptive)."""

    level: int
    n_elements: int
    n_dofs: int
    lambda_h: float
    lambda_star: float
    err_lambda: float | None = None
    err_lambda_star: float | None = None
    err_u2_L2: float | None = None
    err_grad_u2: float | None = None
    err_sigma_star: float | None = None
    eta: float | None = None
    eta_lambda: float | None = None
    hot: float | None = None
    hot_remainder: float | None = None
    hot_tilde: float | None = None
    eff: float | None = None
    eff_lambda: float | None = None
    superconv_proj_err: float | None = None
    aux_proj_err: float | None = None
    err_sigma_h: float | None = None
    err_u_h: float | None = None
    err_u_star_L2: float | None = None
    err_u_star_h1: float | None = None
    iterations: int | None = None


@dataclass
class SuperconvergenceRow:
    """Superconvergence and auxiliary-problem data of one level."""

    level: int
    n_elements: int
    n_dofs: int
    lambda_h: float
    superconv_proj_err: float
    aux_proj_err: float
    aux_diff: float
    aux_identity_residual: float


@dataclass(eq=False)
class LevelResult:
    """Everything computed on one mesh."""

    mesh: Mesh
    solution: MixedEigenSolution
    post: PostProcessed
    report: EstimatorReport


# Error columns that get a rate column in uniform studies
RATE_COLUMNS = (
    "err_lambda",
    "err_lambda_star",
    "err_u2_L2",
    "err_grad_u2",
    "err_sigma_star",
    "eta",
    "eta_lambda",
    "hot",
    "hot_remainder",
    "hot_tilde",
    "superconv_proj_err",
    "aux_proj_err",
    "err_sigma_h",
    "err_u_h",
    "err_u_star_L2",
    "err_u_star_h1",
)
FLOORED_COLUMNS = ("err_lambda", "err_lambda_star", "eta_lambda")


def observed_rates(values: Sequence[float | None], floor: float = 0.0) -> list[float | None]:
    """log2 of consecutive ratios; None where a value is missing or <= floor."""
    rates: list[float | None] = [None]
    for previous, current in zip(values[:-1], values[1:]):
        if previous is None or current is None or previous <= floor or current <= floor:
            rates.append(None)
        else:
            rates.append(math.log2(previous / current))
    return rates


def loglog_slope(n: Sequence[float], values: Sequence[float | None], floor: float = 0.0) -> float:
    """Least-squares slope of log(values) against log(n), skipping values <= floor."""
    pairs = [(x, y) for x, y in zip(n, values) if y is not None and y > floor]
    if len(pairs) < 2:
        return float("nan")
    x, y = np.log(np.array(pairs, dtype=float)).T
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def eigenfunction_overlap(mesh: Mesh, solution: MixedEigenSolution, exact: ExactSolution, degree: int) -> float:
    coeffs = project(solution.system.k, exact.u, mesh, degree)
    return float(np.sum(mesh.determinants * np.sum(coeffs * solution.u_h.modal(), axis=1)))


def solve_level(
    mesh: Mesh,
    k: int,
    exact: ExactSolution | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    quad_degree: int = ERROR_QUADRATURE_DEGREE,
) -> LevelResult:
    """Solve, post-process and estimate on one mesh."""
    system = assemble(mesh, k)
    solution = solve_eigenpair(system, tol=tol, max_iter=max_iter)
    if exact is not None and exact.has_field:
        solution = align_sign(solution, eigenfunction_overlap(mesh, solution, exact, quad_degree))
    post = postprocess(solution)
    report = estimate(mesh, post, solution, exact, degree=quad_degree)
    return LevelResult(mesh=mesh, solution=solution, post=post, report=report)


def superconvergence_data(
    solution: MixedEigenSolution,
    exact: ExactSolution,
    quad_degree: int = ERROR_QUADRATURE_DEGREE,
) -> dict[str, float]:
    """||Pi^k u - u_h||, the auxiliary source problem and its identity residual.

    The auxiliary problem uses the exact eigenvalue and eigenfunction as load,
    -(div sigma_aux, v) = lambda (u, v), and reuses the eigen factorization.
    """
    mesh = solution.system.mesh
    dofs = solution.system.u_dofs
    det = mesh.determinants
    projection = project(solution.system.k, exact.u, mesh, quad_degree)
    u_h = solution.u_h.modal()

    load = np.zeros(dofs.n_dofs)
    load[dofs.cell_dofs] = det[:, None] * projection
    _, u_aux_vector = solve_source(solution, exact.lambda_ * load)
    u_aux = u_aux_vector[dofs.cell_dofs]

    def l2(coeffs: np.ndarray) -> float:
        return math.sqrt(float(np.sum(det * np.sum(coeffs**2, axis=1))))

    def inner(a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(det * np.sum(a * b, axis=1)))

    residual = abs(solution.lambda_h * inner(u_aux, u_h) - exact.lambda_ * inner(projection, u_h))
    return {
        "superconv_proj_err": l2(projection - u_h),
        "aux_proj_err": l2(projection - u_aux),
        "aux_diff": l2(u_h - u_aux),
        "aux_identity_residual": residual,
    }


def make_row(level: int, result: LevelResult, superconvergence: dict[str, float] | None = None) -> ConvergenceRow:
    report = result.report
    solution = result.solution
    row = ConvergenceRow(
        level=level,
        n_elements=result.mesh.n_triangles,
        n_dofs=solution.system.n_dofs,
        lambda_h=solution.lambda_h,
        lambda_star=result.post.lambda_star,
        err_lambda=report.err_lambda,
        err_lambda_star=report.err_lambda_star,
        err_u2_L2=report.err_u2_L2,
        err_grad_u2=report.err_grad_u2,
        err_sigma_star=report.err_sigma_star,
        eta=report.eta,
        eta_lambda=report.eta_lambda,
        hot=report.hot,
        hot_remainder=report.hot_remainder,
        hot_tilde=report.hot_tilde,
        eff=report.eff,
        eff_lambda=report.eff_lambda,
        err_sigma_h=report.err_sigma_h,
        err_u_h=report.err_u_h,
        err_u_star_L2=report.err_u_star_L2,
        err_u_star_h1=report.err_u_star_h1,
        iterations=solution.iterations,
    )
    if superconvergence is not None:
        row.superconv_proj_err = superconvergence["superconv_proj_err"]
        row.aux_proj_err = superconvergence["aux_proj_err"]
    return row


def _uniform_levels(mesh: Mesh, levels: int):
    for level in range(levels):
        yield level, mesh
        if level + 1 < levels:
            mesh = refine_uniform(mesh)


def run_square_study(
    k: int,
    levels: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    quad_degree: int = ERROR_QUADRATURE_DEGREE,
) -> list[ConvergenceRow]:
    """Uniform refinement of the unit square starting from 32 triangles."""
    exact = unit_square_solution()
    rows = []
    for level, mesh in _uniform_levels(make_unit_square(SQUARE_INITIAL_N), levels):
        result = solve_level(mesh, k, exact, tol, max_iter, quad_degree)
        rows.append(make_row(level, result, superconvergence_data(result.solution, exact, quad_degree)))
        logger.info(
            "square k=%d level %d: %d elements, eta=%.4e, |lambda-lambda*|=%.4e",
            k, level, mesh.n_triangles, rows[-1].eta, rows[-1].err_lambda_star,
        )
    return rows


def run_lshape_uniform(
    k: int,
    levels: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> list[ConvergenceRow]:
    """Uniform refinement of the L-shape against the reference eigenvalue."""
    exact = lshape_reference()
    rows = []
    for level, mesh in _uniform_levels(refine_uniform(make_lshape(LSHAPE_INITIAL_N)), levels):
        result = solve_level(mesh, k, exact, tol, max_iter)
        rows.append(make_row(level, result))
        logger.info(
            "lshape (uniform) k=%d level %d: %d elements, eta=%.4e",
            k, level, mesh.n_triangles, rows[-1].eta,
        )
    return rows


def mark(eta_K: np.ndarray, fraction: float = MARKING_FRACTION) -> np.ndarray:
    """Indices with eta(K) >= fraction * max eta(K); never empty."""
    return np.flatnonzero(eta_K >= fraction * eta_K.max())


def run_lshape_adaptive(
    k: int,
    max_dofs: int = DEFAULT_MAX_DOFS,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> list[ConvergenceRow]:
    """SOLVE, ESTIMATE, MARK, REFINE on the L-shape until n_dofs exceeds max_dofs."""
    exact = lshape_reference()
    mesh = refine_uniform(make_lshape(LSHAPE_INITIAL_N))
    rows = []
    iteration = 0
    while True:
        result = solve_level(mesh, k, exact, tol, max_iter)
        rows.append(make_row(iteration, result))
        logger.info(
            "lshape k=%d iteration %d: %d elements, %d dofs, eta=%.4e, |lambda-lambda*|=%.4e",
            k, iteration, mesh.n_triangles, rows[-1].n_dofs, rows[-1].eta, rows[-1].err_lambda_star,
        )
        if rows[-1].n_dofs > max_dofs:
            return rows
        mesh = refine_adaptive(mesh, mark(result.report.eta_K))
        iteration += 1


def run_superconvergence_check(
    k: int,
    levels: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    quad_degree: int = ERROR_QUADRATURE_DEGREE,
) -> list[SuperconvergenceRow]:
    """||Pi^k u - u_h|| and the auxiliary problem on the unit square."""
    exact = unit_square_solution()
    rows = []
    for level, mesh in _uniform_levels(make_unit_square(SQUARE_INITIAL_N), levels):
        system = assemble(mesh, k)
        solution = solve_eigenpair(system, tol=tol, max_iter=max_iter)
        solution = align_sign(solution, eigenfunction_overlap(mesh, solution, exact, quad_degree))
        data = superconvergence_data(solution, exact, quad_degree)
        rows.append(
            SuperconvergenceRow(
                level=level,
                n_elements=mesh.n_triangles,
                n_dofs=system.n_dofs,
                lambda_h=solution.lambda_h,
                **data,
            )
        )
        logger.info(
            "superconvergence k=%d level %d: ||Pi u - u_h||=%.4e, aux residual=%.2e",
            k, level, data["superconv_proj_err"], data["aux_identity_residual"],
        )
    return rows


def tail_slopes(rows: Sequence[ConvergenceRow], columns: Sequence[str] = ("eta", "eta_lambda", "err_lambda_star")) -> dict[str, float]:
    """Log-log slopes against n_dofs over the second half of the rows."""
    tail = list(rows[len(rows) // 2:])
    if len(tail) < 3:
        tail = list(rows)
    n = [row.n_dofs for row in tail]
    slopes = {}
    for column in columns:
        floor = ROUNDING_FLOOR if column in FLOORED_COLUMNS else 0.0
        slopes[column] = loglog_slope(n, [getattr(row, column) for row in tail], floor)
    return slopes


def rows_to_frame(rows: Sequence, with_rates: bool = False) -> pd.DataFrame:
    """DataFrame with one column per row field and optional rate columns."""
    if not rows:
        return pd.DataFrame()
    names = [f.name for f in fields(rows[0])]
    frame = pd.DataFrame([asdict(row) for row in rows], columns=names)
    if with_rates:
        for column in RATE_COLUMNS:
            if column not in frame:
                continue
            floor = ROUNDING_FLOOR if column in FLOORED_COLUMNS else 0.0
            values = [None if pd.isna(v) else float(v) for v in frame[column]]
            rates = observed_rates(values, floor)
            position = frame.columns.get_loc(column) + 1
            frame.insert(position, f"rate_{column}", [np.nan if r is None else r for r in rates])
    return frame


def write_csv(frame: pd.DataFrame, path: Path | str) -> Path:
    """Write a result table with full double precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return path


def write_dat(rows: Sequence[ConvergenceRow], path: Path | str) -> Path:
    """Whitespace-separated columns for gnuplot: N, elements, |lambda-lambda*|, eta, eta_lambda."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = ["n_dofs", "n_elements", "err_lambda_star", "eta", "eta_lambda"]
    frame = pd.DataFrame([asdict(row) for row in rows])[columns]
    with path.open("w", encoding="utf-8") as handle:
        handle.write("# " + " ".join(columns) + "\n")
        frame.to_csv(handle, sep=" ", index=False, header=False, float_format=CSV_FLOAT_FORMAT)
    return path


def format_table(frame: pd.DataFrame, columns: Sequence[str]) -> str:
    """Aligned text table; error columns show their rate in parentheses."""
    table = {}
    for column in columns:
        if column not in frame:
            continue
        rate_column = f"rate_{column}"
        cells = []
        for index, value in enumerate(frame[column]):
            if pd.isna(value):
                cells.append("-")
                continue
            if isinstance(value, (int, np.integer)):
                cells.append(str(value))
                continue
            cell = f"{value:.15g}" if column.startswith("lambda") else f"{value:.6e}"
            if rate_column in frame and not pd.isna(frame[rate_column].iloc[index]):
                cell += f" ({frame[rate_column].iloc[index]:.2f})"
            cells.append(cell)
        table[column] = cells
    return pd.DataFrame(table).to_string(index=False)
