"""Smallest eigenpair of the discrete mixed problem by inverse power iteration.

Every iteration solves one mixed source problem with the saddle point matrix
[[A, B^T], [B, 0]], factorized once per mesh. Eliminating sigma shows that
the u-part w of the solution with load (0, -M u) satisfies S w = M u with
S = B A^{-1} B^T, so the iteration is inverse iteration for S u = lambda M u.

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

from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from mixedeig.assembly import FEFunction, MixedSystem
from mixedeig.constants import DEFAULT_MAX_ITER, DEFAULT_TOL, STAGNATION_RATIO, VECTOR_TOL
from mixedeig.exceptions import SolverError

logger = logging.getLogger(__name__)


class SaddlePointSolver:
    """Sparse LU factorization of the mixed saddle point matrix."""

    def __init__(self, A: sp.spmatrix, B: sp.spmatrix) -> None:
        self.n_sigma = A.shape[0]
        self.n_u = B.shape[0]
        matrix = sp.bmat([[A, B.T], [B, None]], format="csc")
        try:
            self._lu = splu(matrix)
        except RuntimeError as e:
            raise SolverError(f"Saddle point factorization failed: {e}") from e

    def solve(self, f_sigma: np.ndarray | None, g_u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Solve A s + B^T w = f_sigma, B s = g_u; returns (s, w)."""
        rhs = np.zeros(self.n_sigma + self.n_u)
        if f_sigma is not None:
            rhs[: self.n_sigma] = f_sigma
        rhs[self.n_sigma:] = g_u
        solution = self._lu.solve(rhs)
        if not np.all(np.isfinite(solution)):
            raise SolverError("Saddle point solve produced non-finite values")
        return solution[: self.n_sigma], solution[self.n_sigma:]


@dataclass(eq=False)
class EigenIterate:
    """Raw result of the inverse power iteration."""

    eigenvalue: float
    u: np.ndarray
    sigma: np.ndarray
    iterations: int
    residual: float


def _mean(weights: np.ndarray, u: np.ndarray) -> float:
    return float(weights @ u)


def inverse_power_iteration(
    solver: SaddlePointSolver,
    M: sp.spmatrix,
    initial: np.ndarray,
    mean_weights: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    vector_tol: float = VECTOR_TOL,
) -> EigenIterate:
    """Inverse iteration for S u = lambda M u with a factorized saddle matrix.

    Stops once the relative Rayleigh-quotient change is below `tol` and the
    M-norm change of the normalized iterate is below `vector_tol` or no
    longer decreasing. The returned sigma comes from one extra solve with
    load lambda M u, so that -B sigma = lambda M u holds to solver precision.

    Args:
        solver: Factorized saddle matrix.
        M: Mass matrix of U_h.
        initial: Nonzero starting vector.
        mean_weights: w with w @ u = integral of u, fixes the sign.
        tol: Relative Rayleigh-quotient tolerance.
        max_iter: Iteration limit.
        vector_tol: Tolerance on the change of the normalized iterate.

    Raises:
        SolverError: On a vanishing iterate or when max_iter is exhausted.
    """
    if max_iter < 1:
        raise SolverError(f"max_iter must be at least 1, got {max_iter}")

    def m_norm(v: np.ndarray) -> float:
        return float(np.sqrt(v @ (M @ v)))

    norm = m_norm(initial)
    if not np.isfinite(norm) or norm == 0.0:
        raise SolverError("Initial iterate has zero mass norm")
    u = initial / norm
    eigenvalue = np.inf
    step = np.inf
    for iteration in range(1, max_iter + 1):
        mass_u = M @ u
        _, w = solver.solve(None, -mass_u)
        w_norm = m_norm(w)
        if w_norm == 0.0:
            raise SolverError("Inverse iteration collapsed to zero")
        previous = eigenvalue
        eigenvalue = float(w @ mass_u) / w_norm**2
        w /= w_norm
        if _mean(mean_weights, w) < 0.0:
            w = -w
        previous_step = step
        step = m_norm(w - u)
        u = w
        change = abs(eigenvalue - previous) / abs(eigenvalue)
        logger.debug(
            "iteration %3d: lambda=%.16e change=%.3e step=%.3e", iteration, eigenvalue, change, step
        )
        if change <= tol and (step <= vector_tol or step >= STAGNATION_RATIO * previous_step):
            break
    else:
        raise SolverError(
            f"Inverse iteration did not converge in {max_iter} iterations "
            f"(last relative change {change:.3e})"
        )

    sigma, _ = solver.solve(None, -eigenvalue * (M @ u))
    return EigenIterate(
        eigenvalue=eigenvalue, u=u, sigma=sigma, iterations=iteration, residual=0.0
    )


@dataclass(eq=False)
class MixedEigenSolution:
    """Discrete eigentriple with solver diagnostics.

    residual is ||-div sigma_h - lambda_h u_h||_0 / lambda_h, measured in U_h.
    """

    lambda_h: float
    u_h: FEFunction
    sigma_h: FEFunction
    iterations: int
    residual: float
    system: MixedSystem = field(repr=False)
    solver: SaddlePointSolver = field(repr=False)


def initial_iterate(system: MixedSystem) -> np.ndarray:
    """U_h interpolant of the constant 1 (only the constant modes are nonzero)."""
    u = np.zeros(system.u_dofs.n_dofs)
    u[system.u_dofs.cell_dofs[:, 0]] = 1.0 / np.sqrt(2.0)
    return u


def mean_weights(system: MixedSystem) -> np.ndarray:
    """Weights w with w @ u_h = integral of u_h over the domain."""
    weights = np.zeros(system.u_dofs.n_dofs)
    weights[system.u_dofs.cell_dofs[:, 0]] = system.mesh.determinants / np.sqrt(2.0)
    return weights


def solve_eigenpair(
    system: MixedSystem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    initial: np.ndarray | None = None,
) -> MixedEigenSolution:
    """Smallest eigenpair of the mixed problem assembled in `system`.

    Args:
        system: Output of assemble().
        tol: Relative Rayleigh-quotient tolerance (> 0).
        max_iter: Iteration limit.
        initial: Optional starting vector; defaults to the interpolant of 1.

    Returns:
        MixedEigenSolution with ||u_h||_0 = 1 and a positive mean of u_h.

    Raises:
        SolverError: If the factorization fails or the iteration stalls.
    """
    if tol <= 0:
        raise SolverError(f"Tolerance must be positive, got {tol}")
    A, B, M = system.matrices()
    solver = SaddlePointSolver(A, B)
    start = initial_iterate(system) if initial is None else np.asarray(initial, dtype=float)
    result = inverse_power_iteration(
        solver, M, start, mean_weights(system), tol=tol, max_iter=max_iter
    )
    mass_diagonal = M.diagonal()
    defect = -(B @ result.sigma) / mass_diagonal - result.eigenvalue * result.u
    residual = float(np.sqrt(defect @ (mass_diagonal * defect))) / result.eigenvalue
    logger.info(
        "Eigenpair k=%d, %d triangles: lambda_h=%.15g after %d iterations (residual %.2e)",
        system.k, system.mesh.n_triangles, result.eigenvalue, result.iterations, residual,
    )
    return MixedEigenSolution(
        lambda_h=result.eigenvalue,
        u_h=FEFunction(system.mesh, system.u_dofs, result.u),
        sigma_h=FEFunction(system.mesh, system.sigma_dofs, result.sigma),
        iterations=result.iterations,
        residual=residual,
        system=system,
        solver=solver,
    )


def align_sign(solution: MixedEigenSolution, overlap: float) -> MixedEigenSolution:
    """Flip (u_h, sigma_h) when the overlap (u, u_h) with the exact eigenfunction is negative."""
    if overlap >= 0.0:
        return solution
    logger.warning("(u, u_h) = %.3e < 0 despite positive mean, flipping sign", overlap)
    return MixedEigenSolution(
        lambda_h=solution.lambda_h,
        u_h=FEFunction(solution.u_h.mesh, solution.u_h.dofmap, -solution.u_h.coefficients),
        sigma_h=FEFunction(solution.sigma_h.mesh, solution.sigma_h.dofmap, -solution.sigma_h.coefficients),
        iterations=solution.iterations,
        residual=solution.residual,
        system=solution.system,
        solver=solution.solver,
    )


def solve_source(solution: MixedEigenSolution, load: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mixed source problem -(div s, v) = (f, v) with load vector (f, psi_v).

    Reuses the factorization of the eigen solve; returns (s, w) coefficients.
    """
    return solution.solver.solve(None, -np.asarray(load, dtype=float))
