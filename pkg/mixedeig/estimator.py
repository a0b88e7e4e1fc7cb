"""A posteriori error estimators and exact error measurement.

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

from dataclasses import dataclass
import logging
import math
from typing import Callable

import numpy as np

from mixedeig.assembly import element_integrals, jump_seminorm_squared
from mixedeig.constants import (
    ERROR_QUADRATURE_DEGREE,
    LSHAPE_REFERENCE_EIGENVALUE,
    QUADRATURE_CHUNK,
    SQUARE_EIGENVALUE,
)
from mixedeig.eigensolve import MixedEigenSolution
from mixedeig.exceptions import EstimatorError
from mixedeig.mesh import Mesh
from mixedeig.postprocess import PostProcessed, pad_scalar, pad_vector
from mixedeig.quadrature import quadrature

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExactSolution:
    """Exact (or reference) eigenpair.

    Attributes:
        lambda_: Eigenvalue.
        u: Normalized eigenfunction u(x, y), or None when only a reference
            eigenvalue is known.
        sigma: Gradient of u, returning a trailing axis of length 2.
    """

    lambda_: float
    u: Callable | None = None
    sigma: Callable | None = None

    @property
    def has_field(self) -> bool:
        return self.u is not None and self.sigma is not None


def _square_u(x, y):
    return 2.0 * np.sin(np.pi * x) * np.sin(np.pi * y)


def _square_sigma(x, y):
    return np.stack(
        [
            2.0 * np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
            2.0 * np.pi * np.sin(np.pi * x) * np.cos(np.pi * y),
        ],
        axis=-1,
    )


def unit_square_solution() -> ExactSolution:
    """First Dirichlet eigenpair of the unit square, lambda = 2 pi^2."""
    return ExactSolution(lambda_=SQUARE_EIGENVALUE, u=_square_u, sigma=_square_sigma)


def lshape_reference() -> ExactSolution:
    """Reference eigenvalue of the L-shaped domain; no closed-form eigenfunction."""
    return ExactSolution(lambda_=LSHAPE_REFERENCE_EIGENVALUE)


@dataclass
class EstimatorReport:
    """Estimators and, when an exact solution is known, true errors.

    cross_term is the signed (sigma_h* - sigma, grad(u - u_h**)) and
    satisfies err_grad_u2^2 + err_sigma_star^2 = eta^2 - 2 cross_term.
    hot_remainder = 2 |cross_term| is the remainder of the reliability bound
    on the squared scale; hot = |cross_term|^(1/2) is its tabulated
    counterpart on the scale of eta.
    """

    eta_K: np.ndarray
    eta: float
    eta_lambda: float
    flux_defect: float
    lambda_defect: float
    err_lambda: float | None = None
    err_lambda_star: float | None = None
    err_grad_u2: float | None = None
    err_sigma_star: float | None = None
    err_u2_L2: float | None = None
    err_u_star_L2: float | None = None
    err_u_star_h1: float | None = None
    err_u_h: float | None = None
    err_sigma_h: float | None = None
    cross_term: float | None = None
    hot: float | None = None
    hot_remainder: float | None = None
    hot_tilde: float | None = None
    eff: float | None = None
    eff_lambda: float | None = None


def indicators(mesh: Mesh, post: PostProcessed) -> np.ndarray:
    """eta(K) = ||grad u_h** - sigma_h*||_K for every triangle."""
    k = post.u_star.dofmap.k
    rule = quadrature(2 * (k + 3))
    difference = post.u_star2.gradients(rule.xy) - post.sigma_star.values(rule.xy)
    squared = element_integrals(mesh, rule.weights, np.sum(difference**2, axis=-1))
    return np.sqrt(np.maximum(squared, 0.0))


def flux_defect(mesh: Mesh, sigma_h, sigma_star) -> float:
    """||sigma_h - sigma_h*||_0, exact through the shared Piola map."""
    m = sigma_star.space.poly_degree
    n = sigma_star.space.n_modes
    d = pad_vector(sigma_h.modal(), m) - sigma_star.modal()
    d_x, d_y = d[:, :n], d[:, n:]
    jac = mesh.jacobians
    g = np.einsum("kai,kaj->kij", jac, jac)
    local = (
        g[:, 0, 0] * np.sum(d_x**2, axis=1)
        + 2.0 * g[:, 0, 1] * np.sum(d_x * d_y, axis=1)
        + g[:, 1, 1] * np.sum(d_y**2, axis=1)
    ) / mesh.determinants
    return math.sqrt(max(float(np.sum(local)), 0.0))


def lambda_defect(mesh: Mesh, post: PostProcessed, sol: MixedEigenSolution) -> float:
    """|(lambda_h* u_h* - lambda_h u_h, u_h**)|."""
    m = post.u_star.space.poly_degree
    combined = post.lambda_star * post.u_star.modal() - sol.lambda_h * pad_scalar(sol.u_h.modal(), m)
    return abs(float(np.sum(mesh.determinants * np.sum(combined * post.u_star2.modal(), axis=1))))


def _root(value: float) -> float:
    return math.sqrt(max(value, 0.0))


def _exact_integrals(mesh: Mesh, post: PostProcessed, sol: MixedEigenSolution, exact: ExactSolution, degree: int) -> dict[str, float]:
    rule = quadrature(degree)
    xy = rule.xy
    names = ("grad_u2", "sigma_star", "u2", "u_star", "grad_u_star", "u_h", "sigma_h", "cross")
    totals = dict.fromkeys(names, 0.0)
    for lo in range(0, mesh.n_triangles, QUADRATURE_CHUNK):
        block = slice(lo, min(lo + QUADRATURE_CHUNK, mesh.n_triangles))
        points = mesh.origins[block, None, :] + np.einsum("kij,pj->kpi", mesh.jacobians[block], xy)
        u = exact.u(points[..., 0], points[..., 1])
        sigma = exact.sigma(points[..., 0], points[..., 1])
        grad_u2 = post.u_star2.gradients(xy, block)
        sigma_star = post.sigma_star.values(xy, block)
        pointwise = {
            "grad_u2": np.sum((sigma - grad_u2) ** 2, axis=-1),
            "sigma_star": np.sum((sigma - sigma_star) ** 2, axis=-1),
            "u2": (u - post.u_star2.values(xy, block)) ** 2,
            "u_star": (u - post.u_star.values(xy, block)) ** 2,
            "grad_u_star": np.sum((sigma - post.u_star.gradients(xy, block)) ** 2, axis=-1),
            "u_h": (u - sol.u_h.values(xy, block)) ** 2,
            "sigma_h": np.sum((sigma - sol.sigma_h.values(xy, block)) ** 2, axis=-1),
            "cross": np.sum((sigma_star - sigma) * (sigma - grad_u2), axis=-1),
        }
        weights = rule.weights
        determinants = mesh.determinants[block]
        for name, values in pointwise.items():
            totals[name] += float(np.sum((values @ weights) * determinants))
    return totals


def estimate(
    mesh: Mesh,
    post: PostProcessed,
    sol: MixedEigenSolution,
    exact: ExactSolution | None = None,
    degree: int = ERROR_QUADRATURE_DEGREE,
) -> EstimatorReport:
    """Evaluate eta(K), eta, eta_lambda and, given exact data, the true errors.

    Args:
        mesh: Mesh of the solve.
        post: Post-processed fields of `sol`.
        sol: Discrete eigentriple.
        exact: Exact eigenpair, or a reference eigenvalue only.
        degree: Quadrature degree for integrals against the exact solution.
    """
    eta_K = indicators(mesh, post)
    eta = float(np.sqrt(np.sum(eta_K**2)))
    defect = flux_defect(mesh, sol.sigma_h, post.sigma_star)
    lam_defect = lambda_defect(mesh, post, sol)
    report = EstimatorReport(
        eta_K=eta_K,
        eta=eta,
        eta_lambda=eta**2 + defect**2 + lam_defect,
        flux_defect=defect,
        lambda_defect=lam_defect,
    )
    if exact is None:
        return report

    report.err_lambda = abs(exact.lambda_ - sol.lambda_h)
    report.err_lambda_star = abs(exact.lambda_ - post.lambda_star)
    if report.err_lambda_star > 0.0:
        report.eff_lambda = report.eta_lambda / report.err_lambda_star
    if not exact.has_field:
        return report

    totals = _exact_integrals(mesh, post, sol, exact, degree)
    report.err_grad_u2 = _root(totals["grad_u2"])
    report.err_sigma_star = _root(totals["sigma_star"])
    report.err_u2_L2 = _root(totals["u2"])
    report.err_u_star_L2 = _root(totals["u_star"])
    report.err_u_star_h1 = _root(totals["grad_u_star"] + jump_seminorm_squared(post.u_star, degree=degree))
    report.err_u_h = _root(totals["u_h"])
    report.err_sigma_h = _root(totals["sigma_h"])
    report.cross_term = totals["cross"]
    report.hot_remainder = 2.0 * abs(totals["cross"])
    report.hot = math.sqrt(abs(totals["cross"]))
    report.hot_tilde = report.err_u_star_L2 * report.err_u2_L2 + report.err_u2_L2**2
    denominator = report.err_grad_u2**2 + report.err_sigma_star**2
    if denominator > 0.0:
        report.eff = eta**2 / denominator
    return report


def bound_identity_residual(report: EstimatorReport) -> float:
    """Relative defect of err_grad_u2^2 + err_sigma_star^2 = eta^2 - 2 (sigma_h* - sigma, grad(u - u_h**)).

    Raises:
        EstimatorError: If the report carries no exact-solution errors.
    """
    if report.err_grad_u2 is None or report.cross_term is None:
        raise EstimatorError("Identity check needs an exact solution")
    lhs = report.err_grad_u2**2 + report.err_sigma_star**2
    rhs = report.eta**2 - 2.0 * report.cross_term
    scale = max(lhs, report.eta**2, 2.0 * abs(report.cross_term), np.finfo(float).tiny)
    return abs(lhs - rhs) / scale


def guaranteed_bound_check(report: EstimatorReport, rtol: float = 1e-9) -> bool:
    """True when the error identity behind the guaranteed bound holds to `rtol`."""
    return bound_identity_residual(report) <= rtol


def cross_term_by_parts(
    mesh: Mesh,
    post: PostProcessed,
    exact: ExactSolution,
    degree: int = ERROR_QUADRATURE_DEGREE,
) -> float:
    """-(div(sigma_h* - sigma), u - u_h**) using div sigma = -lambda u."""
    rule = quadrature(degree)
    points = mesh.map_points(rule.xy)
    u = exact.u(points[..., 0], points[..., 1])
    div_star = post.sigma_star.divergences(rule.xy)
    values = -(div_star + exact.lambda_ * u) * (u - post.u_star2.values(rule.xy))
    return float(np.sum(element_integrals(mesh, rule.weights, values)))
