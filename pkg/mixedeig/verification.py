"""Invariant suite behind the `verify` command.

Every check measures one structural identity of the discretization on a
small built-in mesh and compares it with a named tolerance from
mixedeig.constants. Checks that need the exact eigenfunction only run on
the unit square.

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
from typing import Sequence

import numpy as np

from mixedeig.assembly import FEFunction, MixedSystem, assemble, element_integrals, normal_jumps
from mixedeig.constants import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    ERROR_QUADRATURE_DEGREE,
    LSHAPE_INITIAL_N,
    TOL_AUX,
    TOL_BUBBLE,
    TOL_CONFORMITY,
    TOL_DIVERGENCE,
    TOL_LAMBDA_NORM,
    TOL_LAMMINLAMH,
    TOL_MEAN_VALUE,
    TOL_PROJECTION,
    TOL_RESIDUAL,
    TOL_TRACE,
    TOL_UNISOLVENCE_CONDITION,
)
from mixedeig.eigensolve import MixedEigenSolution, align_sign, solve_eigenpair
from mixedeig.estimator import (
    bound_identity_residual,
    cross_term_by_parts,
    estimate,
    unit_square_solution,
)
from mixedeig.exceptions import ConfigurationError, MeshError
from mixedeig.experiments import eigenfunction_overlap, superconvergence_data
from mixedeig.femcore import (
    LocalSpace,
    derivative_matrices,
    make_bdm_space,
    make_bubble_space,
    make_reduced_space,
    piola_divergence,
    piola_map,
    scaled_condition,
)
from mixedeig.mesh import Mesh, make_lshape, make_unit_square, refine_uniform
from mixedeig.polynomials import REFERENCE_VERTICES, dim_poly, dubiner, edge_legendre, edge_normal, edge_points
from mixedeig.postprocess import PostProcessed, pad_scalar, postprocess
from mixedeig.quadrature import line_quadrature, quadrature

logger = logging.getLogger(__name__)

# Smallest angle accepted for random test elements (about 20 degrees)
RANDOM_ELEMENT_MIN_ANGLE = 0.35
RANDOM_ELEMENT_COUNT = 10


@dataclass(frozen=True)
class CheckResult:
    """Measured value of one invariant against its tolerance."""

    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<44s} {self.value:10.3e}  (tol {self.tolerance:.1e})"


def _relative(difference: float, scale: float) -> float:
    return float(difference) / max(float(scale), np.finfo(float).tiny)


def reference_element() -> Mesh:
    return Mesh(REFERENCE_VERTICES, [[0, 1, 2]])


def random_elements(count: int = RANDOM_ELEMENT_COUNT, seed: int = 0) -> list[Mesh]:
    """Shape-regular single-triangle meshes with random affine maps."""
    rng = np.random.default_rng(seed)
    elements = []
    while len(elements) < count:
        vertices = rng.uniform(-1.0, 1.0, size=(3, 2))
        d1 = vertices[1] - vertices[0]
        d2 = vertices[2] - vertices[0]
        if d1[0] * d2[1] - d1[1] * d2[0] < 0.0:
            vertices = vertices[[0, 2, 1]]
        try:
            element = Mesh(vertices, [[0, 1, 2]])
        except MeshError:
            continue
        if element.min_angles()[0] >= RANDOM_ELEMENT_MIN_ANGLE:
            elements.append(element)
    return elements


def physical_moment_matrix(space: LocalSpace, element: Mesh) -> np.ndarray:
    """DOF functionals of an H(div) space applied to its Piola-mapped basis on one triangle.

    Edge moments use the physical unit normal and arc length, divergence
    moments the mapped modal polynomials and volume moments the Piola-mapped
    normal bubbles, all integrated by quadrature on the physical element.
    """
    m = space.poly_degree
    jacobian = element.jacobians[0]
    det = element.determinants[0]
    vertices = element.element_vertices[0]

    rows = []
    t, w = line_quadrature(2 * m + 2)
    legendre = edge_legendre(space.edge_dofs, t)
    for edge in range(3):
        tangent = vertices[(edge + 2) % 3] - vertices[(edge + 1) % 3]
        length = float(np.linalg.norm(tangent))
        normal = np.array([tangent[1], -tangent[0]]) / length
        physical = piola_map(jacobian, det, space.values(edge_points(edge, t)))
        rows.append((legendre * (w * length)) @ (physical @ normal))

    rule = quadrature(2 * m)
    xy = rule.xy
    weights = rule.weights * det
    n_div = dim_poly(m - 1) - 1
    psi = dubiner(m - 1, xy[:, 0], xy[:, 1])[1 : n_div + 1]
    divergence = piola_divergence(det, space.divergences(xy))
    rows.append((psi * weights) @ divergence)

    bubbles = make_bubble_space(m)
    if bubbles.dim:
        n = dim_poly(m)
        modes = dubiner(m, xy[:, 0], xy[:, 1]).T
        reference = np.stack(
            [modes @ bubbles.orthonormal[:n], modes @ bubbles.orthonormal[n:]], axis=-1
        )
        mapped_bubbles = piola_map(jacobian, det, reference)
        mapped_basis = piola_map(jacobian, det, space.values(xy))
        rows.append(np.einsum("p,pbi,pdi->bd", weights, mapped_bubbles, mapped_basis))
    return np.vstack(rows)


def unisolvence_checks(k: int, count: int = RANDOM_ELEMENT_COUNT) -> list[CheckResult]:
    """Moment systems of Sigma_h and Sigma_h* on the reference and random elements."""
    results = []
    elements = [reference_element()] + random_elements(count)
    for label, space in (("Sigma_h", make_bdm_space(k)), ("Sigma_h*", make_reduced_space(k))):
        reference = physical_moment_matrix(space, elements[0])
        results.append(
            CheckResult(
                f"{label} DOF duality on reference element",
                float(np.abs(reference - np.eye(space.dim)).max()),
                TOL_TRACE,
            )
        )
        worst = max(scaled_condition(physical_moment_matrix(space, e)) for e in elements)
        results.append(
            CheckResult(f"{label} moment system scaled condition", worst, TOL_UNISOLVENCE_CONDITION)
        )
        if space.constraints is not None:
            results.append(
                CheckResult(
                    f"{label} normal-trace reduction",
                    float(np.abs(space.constraints @ space.coeffs).max()),
                    TOL_BUBBLE,
                )
            )
    return results


def bubble_checks(k: int) -> list[CheckResult]:
    """Normal bubbles of degree k + 1 and k + 3 are divergence free with zero normal trace."""
    results = []
    t, _ = line_quadrature(2 * (k + 3))
    for degree in (k + 1, k + 3):
        bubbles = make_bubble_space(degree)
        rule = quadrature(2 * degree)
        scale = np.abs(bubbles.values(rule.xy)).max()
        divergence = np.abs(bubbles.divergences(rule.xy)).max()
        trace = max(
            float(np.abs(bubbles.values(edge_points(edge, t)) @ edge_normal(edge)).max())
            for edge in range(3)
        )
        results.append(
            CheckResult(f"bubble degree {degree} divergence", _relative(divergence, scale), TOL_BUBBLE)
        )
        results.append(
            CheckResult(f"bubble degree {degree} normal trace", _relative(trace, scale), TOL_BUBBLE)
        )
    return results


def _global_basis(system: MixedSystem, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    sigma_dofs, u_dofs = system.sigma_dofs, system.u_dofs
    values, divergences = [], []
    for i in range(sigma_dofs.n_dofs):
        unit = np.zeros(sigma_dofs.n_dofs)
        unit[i] = 1.0
        phi = FEFunction(system.mesh, sigma_dofs, unit)
        values.append(phi.values(xy))
        divergences.append(phi.divergences(xy))
    scalars = []
    for v in range(u_dofs.n_dofs):
        unit = np.zeros(u_dofs.n_dofs)
        unit[v] = 1.0
        scalars.append(FEFunction(system.mesh, u_dofs, unit).values(xy))
    return np.array(values), np.array(divergences), np.array(scalars)


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference triangle."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def _monomial_exponents(degree: int) -> list[tuple[int, int]]:
    return [(a, total - a) for total in range(degree + 1) for a in range(total + 1)]


def _lattice_points(degree: int) -> np.ndarray:
    """Equispaced points of the reference triangle, unisolvent for P^degree."""
    if degree == 0:
        return np.array([[1.0 / 3.0, 1.0 / 3.0]])
    return np.array([[i / degree, j / degree] for j in range(degree + 1) for i in range(degree + 1 - j)])


def monomial_gram(degree: int) -> np.ndarray:
    exponents = _monomial_exponents(degree)
    return np.array([[monomial_integral(a + c, b + d) for c, d in exponents] for a, b in exponents])


def assembly_oracle_check(k: int) -> CheckResult:
    """A, B and M on the two-triangle square against exact monomial integration.

    Every global basis function is sampled on a lattice of each element,
    expanded in reference monomials and the products integrated in closed form,
    so no quadrature rule enters the oracle.
    """
    system = assemble(make_unit_square(1), k)
    degree = k + 1
    points = _lattice_points(degree)
    vandermonde = np.stack([points[:, 0] ** a * points[:, 1] ** b for a, b in _monomial_exponents(degree)], axis=1)
    to_monomial = np.linalg.inv(vandermonde)
    phi, div_phi, psi = _global_basis(system, points)
    c_phi = np.einsum("mp,ikpc->ikmc", to_monomial, phi)
    c_div = np.einsum("mp,ikp->ikm", to_monomial, div_phi)
    c_psi = np.einsum("mp,vkp->vkm", to_monomial, psi)
    gram = monomial_gram(degree)
    det = np.abs(system.mesh.determinants)
    oracle_a = np.einsum("k,ikmc,mn,jknc->ij", det, c_phi, gram, c_phi)
    oracle_b = np.einsum("k,vkm,mn,ikn->vi", det, c_psi, gram, c_div)
    oracle_m = np.einsum("k,vkm,mn,wkn->vw", det, c_psi, gram, c_psi)
    defect = 0.0
    for assembled, oracle in ((system.A, oracle_a), (system.B, oracle_b), (system.M, oracle_m)):
        difference = np.abs(assembled.toarray() - oracle).max()
        defect = max(defect, _relative(difference, np.abs(oracle).max()))
    return CheckResult("assembly matches monomial oracle", defect, TOL_TRACE)


def micro_mesh(domain: str) -> Mesh:
    """Smallest mesh the suite runs on for a domain."""
    if domain == "square":
        return make_unit_square(2)
    if domain == "lshape":
        return refine_uniform(make_lshape(LSHAPE_INITIAL_N))
    raise ConfigurationError(f"Unknown domain {domain!r}")


def _divergence_residual(solution: MixedEigenSolution, post: PostProcessed) -> float:
    mesh = solution.system.mesh
    det = mesh.determinants
    space = post.sigma_star.space
    m, n = space.poly_degree, space.n_modes
    d_x, d_y = derivative_matrices(m)
    modal = post.sigma_star.modal()
    divergence = (modal[:, :n] @ d_x.T + modal[:, n:] @ d_y.T) / det[:, None]
    u_star = pad_scalar(post.u_star.modal(), m)
    residual = -divergence - solution.lambda_h * u_star
    numerator = math.sqrt(float(np.sum(det * np.sum(residual**2, axis=1))))
    denominator = solution.lambda_h * math.sqrt(float(np.sum(det * np.sum(u_star**2, axis=1))))
    return _relative(numerator, denominator)


def _normal_fluxes(sigma: FEFunction, t: np.ndarray) -> np.ndarray:
    traces = sigma.edge_traces(t)
    return np.sum(traces * sigma.mesh.edge_normals[:, None, None, :], axis=-1)


def _element_outflow(sigma: FEFunction, degree: int) -> np.ndarray:
    mesh = sigma.mesh
    t, w = line_quadrature(degree)
    flux = (_normal_fluxes(sigma, t) @ w) * mesh.edge_lengths[:, None]
    outflow = np.zeros(mesh.n_triangles)
    for side in (0, 1):
        owner = mesh.edge_triangles[:, side]
        valid = owner >= 0
        sign = mesh.edge_sign[owner[valid], mesh.edge_local[valid, side]]
        np.add.at(outflow, owner[valid], sign * flux[valid, side])
    return outflow


def _mean_value_defect(solution: MixedEigenSolution, post: PostProcessed) -> float:
    """Per element: (div sigma_h*, 1) = outflow of sigma_h = -lambda_h (u_h, 1) = -lambda_h (u_h*, 1)."""
    mesh = solution.system.mesh
    k = solution.system.k
    space = post.sigma_star.space
    n = space.n_modes
    d_x, d_y = derivative_matrices(space.poly_degree)
    modal = post.sigma_star.modal()
    div_star = (modal[:, :n] @ d_x[0] + modal[:, n:] @ d_y[0]) / math.sqrt(2.0)
    outflow = _element_outflow(solution.sigma_h, 2 * (k + 2))
    mean_scale = -solution.lambda_h * mesh.determinants / math.sqrt(2.0)
    load_h = mean_scale * solution.u_h.modal()[:, 0]
    load_star = mean_scale * post.u_star.modal()[:, 0]
    difference = max(
        np.abs(div_star - outflow).max(),
        np.abs(outflow - load_h).max(),
        np.abs(load_h - load_star).max(),
    )
    return _relative(difference, np.abs(load_h).max())


def _lambda_star_by_quadrature(solution: MixedEigenSolution, post: PostProcessed) -> float:
    mesh = solution.system.mesh
    rule = quadrature(2 * (solution.system.k + 2))
    u_star = post.u_star.values(rule.xy)
    numerator = np.sum(
        element_integrals(mesh, rule.weights, solution.sigma_h.divergences(rule.xy) * u_star)
    )
    denominator = np.sum(element_integrals(mesh, rule.weights, u_star**2))
    return float(-numerator / denominator)


def solution_checks(solution: MixedEigenSolution, post: PostProcessed) -> list[CheckResult]:
    """Identities of the eigen solve and the post-processings on one mesh."""
    system = solution.system
    mesh = system.mesh
    k = system.k
    sigma = solution.sigma_h.coefficients
    u = solution.u_h.coefficients
    lam = solution.lambda_h
    results = [
        CheckResult("eigen residual -div sigma_h = lambda_h u_h", solution.residual, TOL_RESIDUAL),
        CheckResult(
            "lambda_h = ||sigma_h||^2",
            _relative(abs(float(sigma @ (system.A @ sigma)) - lam), lam),
            TOL_LAMBDA_NORM,
        ),
        CheckResult("||u_h|| = 1", abs(float(u @ (system.M @ u)) - 1.0), TOL_LAMBDA_NORM),
    ]

    projection = post.u_star.modal()[:, : dim_poly(k)] - solution.u_h.modal()
    results.append(CheckResult("Pi^k u_h* = u_h", float(np.abs(projection).max()), TOL_PROJECTION))
    results.append(
        CheckResult("-div sigma_h* = lambda_h u_h*", _divergence_residual(solution, post), TOL_DIVERGENCE)
    )

    t, _ = line_quadrature(2 * (k + 3))
    flux_h = _normal_fluxes(solution.sigma_h, t)
    flux_star = _normal_fluxes(post.sigma_star, t)
    flux_scale = np.abs(flux_h).max()
    results.append(
        CheckResult(
            "sigma_h*.n = sigma_h.n on all edges",
            _relative(np.abs(flux_star - flux_h).max(), flux_scale),
            TOL_TRACE,
        )
    )
    for label, field in (("Sigma_h", solution.sigma_h), ("Sigma_h*", post.sigma_star)):
        jumps = normal_jumps(field, degree=2 * (k + 3))
        worst = np.abs(jumps).max() if jumps.size else 0.0
        results.append(
            CheckResult(f"{label} normal continuity", _relative(worst, flux_scale), TOL_CONFORMITY)
        )

    traces = post.u_star2.edge_traces(t)
    trace_scale = np.abs(traces).max()
    interior = ~mesh.boundary_edge
    jump = np.abs(traces[interior, 0] - traces[interior, 1]).max() if interior.any() else 0.0
    results.append(
        CheckResult("u_h** continuity", _relative(jump, trace_scale), TOL_CONFORMITY)
    )
    results.append(
        CheckResult(
            "u_h** vanishes on the boundary",
            _relative(np.abs(traces[mesh.boundary_edge, 0]).max(), trace_scale),
            TOL_CONFORMITY,
        )
    )
    results.append(
        CheckResult("element mean-value compatibility", _mean_value_defect(solution, post), TOL_MEAN_VALUE)
    )
    results.append(
        CheckResult(
            "lambda_h* formula by quadrature",
            _relative(abs(_lambda_star_by_quadrature(solution, post) - post.lambda_star), post.lambda_star),
            TOL_LAMBDA_NORM,
        )
    )
    return results


def exact_solution_checks(
    solution: MixedEigenSolution,
    post: PostProcessed,
    quad_degree: int = ERROR_QUADRATURE_DEGREE,
) -> list[CheckResult]:
    """Identities that involve the exact unit-square eigenpair."""
    mesh = solution.system.mesh
    exact = unit_square_solution()
    report = estimate(mesh, post, solution, exact, degree=quad_degree)
    lam, lam_h = exact.lambda_, solution.lambda_h
    identity = abs((lam - lam_h) - (report.err_sigma_h**2 - lam_h * report.err_u_h**2))
    aux = superconvergence_data(solution, exact, quad_degree)["aux_identity_residual"]
    by_parts = cross_term_by_parts(mesh, post, exact, quad_degree)
    return [
        CheckResult("lambda - lambda_h error identity", identity, TOL_LAMMINLAMH),
        CheckResult("auxiliary problem identity", aux, TOL_AUX),
        CheckResult("guaranteed bound identity", bound_identity_residual(report), TOL_LAMMINLAMH),
        CheckResult(
            "cross term integration by parts",
            _relative(abs(by_parts - report.cross_term), max(abs(report.cross_term), report.eta**2)),
            TOL_LAMMINLAMH,
        ),
    ]


def run_invariant_suite(
    k: int,
    domain: str = "square",
    quad_degree: int = ERROR_QUADRATURE_DEGREE,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> list[CheckResult]:
    """Run every check for order k; exact-solution checks only on the square.

    Args:
        k: Polynomial order.
        domain: "square" or "lshape".
        quad_degree: Quadrature degree for integrals against the exact solution.
        tol: Eigen solver tolerance.
        max_iter: Eigen solver iteration limit.

    Returns:
        One CheckResult per invariant, in a fixed order.
    """
    mesh = micro_mesh(domain)
    results = unisolvence_checks(k) + bubble_checks(k) + [assembly_oracle_check(k)]

    system = assemble(mesh, k)
    solution = solve_eigenpair(system, tol=tol, max_iter=max_iter)
    if domain == "square":
        solution = align_sign(solution, eigenfunction_overlap(mesh, solution, unit_square_solution(), quad_degree))
    post = postprocess(solution)
    results += solution_checks(solution, post)
    if domain == "square":
        results += exact_solution_checks(solution, post, quad_degree)

    failed = sum(not r.passed for r in results)
    logger.info("Invariant suite k=%d on %s: %d checks, %d failed", k, domain, len(results), failed)
    return results


def format_report(results: Sequence[CheckResult]) -> str:
    """One line per check followed by a summary line."""
    lines = [str(result) for result in results]
    passed = sum(result.passed for result in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines)
