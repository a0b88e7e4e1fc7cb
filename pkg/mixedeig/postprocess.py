"""Local post-processing of a discrete mixed eigenpair.

u_h*  : element-wise P^{k+2} with Pi^k u_h* = u_h and gradient fitted to sigma_h.
u_h** : Oswald average of u_h* (continuous, zero on the boundary).
lambda_h* : Rayleigh-type quotient of sigma_h and u_h*.
sigma_h*  : reduced-trace flux with the normal trace of sigma_h and
            -div sigma_h* = lambda_h u_h*.

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

import numpy as np

from mixedeig.assembly import FEFunction, SpaceTag, build_dofmap
from mixedeig.eigensolve import MixedEigenSolution
from mixedeig.exceptions import PostprocessError
from mixedeig.femcore import derivative_matrices, make_bubble_space, make_reduced_space
from mixedeig.polynomials import dim_poly, dubiner, lagrange_nodes

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class PostProcessed:
    """All post-processed quantities of one eigen solve."""

    u_star: FEFunction
    u_star2: FEFunction
    lambda_star: float
    sigma_star: FEFunction


def pad_scalar(coeffs: np.ndarray, m: int) -> np.ndarray:
    """Embed modal coefficients (n, dim) into P^m by zero padding."""
    padded = np.zeros((coeffs.shape[0], dim_poly(m)))
    padded[:, : coeffs.shape[1]] = coeffs
    return padded


def pad_vector(coeffs: np.ndarray, m: int) -> np.ndarray:
    """Embed vector modal coefficients (x block, y block) into vector P^m."""
    half = coeffs.shape[1] // 2
    return np.hstack([pad_scalar(coeffs[:, :half], m), pad_scalar(coeffs[:, half:], m)])


def _metric(jacobians: np.ndarray) -> np.ndarray:
    return np.einsum("kai,kaj->kij", jacobians, jacobians)


def _batched_solve(matrices: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    try:
        solution = np.linalg.solve(matrices, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as e:
        raise PostprocessError(f"Singular local {what} system: {e}") from e
    if not np.all(np.isfinite(solution)):
        raise PostprocessError(f"Local {what} system produced non-finite values")
    return solution


def postprocess_u(u_h: FEFunction, sigma_h: FEFunction) -> FEFunction:
    """Local P^{k+2} reconstruction u_h*.

    The modes of degree <= k are copied from u_h; the remaining modes solve
    (grad u_h*, grad v)_K = (sigma_h, grad v)_K for all v in the span of the
    high modes.
    """
    mesh = u_h.mesh
    k = u_h.dofmap.k
    m = k + 2
    n = dim_poly(m)
    low = slice(0, dim_poly(k))
    high = slice(dim_poly(k), n)

    d_x, d_y = derivative_matrices(m)
    sigma = pad_vector(sigma_h.modal(), m)
    load = sigma[:, :n] @ d_x + sigma[:, n:] @ d_y

    inverse = mesh.inverse_jacobians
    g = np.einsum("kij,klj->kil", inverse, inverse)
    s_xy = d_x.T @ d_y
    stiffness = mesh.determinants[:, None, None] * (
        g[:, 0, 0, None, None] * (d_x.T @ d_x)
        + g[:, 0, 1, None, None] * (s_xy + s_xy.T)
        + g[:, 1, 1, None, None] * (d_y.T @ d_y)
    )
    u_low = u_h.modal()
    rhs = load[:, high] - np.einsum("kab,kb->ka", stiffness[:, high, low], u_low)
    u_high = _batched_solve(stiffness[:, high, high], rhs, "u_h* stiffness")

    dofmap = build_dofmap(mesh, SpaceTag.U_STAR, k)
    coefficients = np.zeros(dofmap.n_dofs)
    coefficients[dofmap.cell_dofs] = np.hstack([u_low, u_high])
    return FEFunction(mesh, dofmap, coefficients)


def _boundary_lagrange_dofs(mesh, m: int) -> np.ndarray:
    vertices = np.flatnonzero(mesh.boundary_vertex)
    edges = np.flatnonzero(mesh.boundary_edge)
    edge_nodes = mesh.n_vertices + edges[:, None] * (m - 1) + np.arange(m - 1)
    return np.concatenate([vertices, edge_nodes.ravel()])


def oswald_average(u_star: FEFunction) -> FEFunction:
    """Continuous P^{k+2} function from nodal arithmetic means of u_h*.

    Boundary nodes are set to zero.
    """
    mesh = u_star.mesh
    k = u_star.dofmap.k
    m = k + 2
    dofmap = build_dofmap(mesh, SpaceTag.U_STAR2, k)
    nodes = lagrange_nodes(m)
    nodal = u_star.modal() @ dubiner(m, nodes[:, 0], nodes[:, 1])

    sums = np.zeros(dofmap.n_dofs)
    counts = np.zeros(dofmap.n_dofs)
    np.add.at(sums, dofmap.cell_dofs, nodal)
    np.add.at(counts, dofmap.cell_dofs, 1.0)
    averaged = sums / counts
    averaged[_boundary_lagrange_dofs(mesh, m)] = 0.0
    return FEFunction(mesh, dofmap, averaged)


def postprocess_lambda(sigma_h: FEFunction, u_star: FEFunction) -> float:
    """lambda_h* = -(div sigma_h, u_h*) / (u_h*, u_h*).

    Raises:
        PostprocessError: If u_h* vanishes.
    """
    mesh = sigma_h.mesh
    degree = max(sigma_h.space.poly_degree, u_star.space.poly_degree)
    n = dim_poly(degree)
    d_x, d_y = derivative_matrices(degree)
    sigma = pad_vector(sigma_h.modal(), degree)
    divergence = sigma[:, :n] @ d_x.T + sigma[:, n:] @ d_y.T
    u = pad_scalar(u_star.modal(), degree)
    numerator = float(np.sum(divergence * u))
    denominator = float(np.sum(mesh.determinants * np.sum(u**2, axis=1)))
    if not denominator > 0.0:
        raise PostprocessError("u_h* vanishes, lambda_h* undefined")
    return -numerator / denominator


def postprocess_sigma(sigma_h: FEFunction, u_star: FEFunction, lambda_h: float) -> FEFunction:
    """Divergence-corrected flux sigma_h* in the reduced-trace space.

    Per element the DOFs of sigma_h* satisfy: edge moments equal those of
    sigma_h; (div sigma_h*, q)_K = -lambda_h (u_h*, q)_K for q in P^{k+2}
    modulo constants; (sigma_h* - sigma_h, l)_K = 0 for the normal bubbles l
    of degree k + 3.

    Raises:
        PostprocessError: If a local moment system is singular.
    """
    mesh = sigma_h.mesh
    k = sigma_h.dofmap.k
    space = make_reduced_space(k)
    m = space.poly_degree
    n = dim_poly(m)
    n_edge = 3 * space.edge_dofs
    n_div = dim_poly(k + 2) - 1

    sigma = pad_vector(sigma_h.modal(), m)
    edge_rows = space.functionals[:n_edge]
    div_rows = space.functionals[n_edge : n_edge + n_div]

    bubbles = make_bubble_space(m).orthonormal
    b_x, b_y = bubbles[:n].T, bubbles[n:].T
    g = _metric(mesh.jacobians) / mesh.determinants[:, None, None]
    vol_rows = np.concatenate(
        [
            g[:, 0, 0, None, None] * b_x + g[:, 0, 1, None, None] * b_y,
            g[:, 1, 0, None, None] * b_x + g[:, 1, 1, None, None] * b_y,
        ],
        axis=2,
    )

    n_tri = mesh.n_triangles
    fixed = np.vstack([edge_rows, div_rows]) @ space.coeffs
    system = np.concatenate(
        [np.broadcast_to(fixed, (n_tri,) + fixed.shape), vol_rows @ space.coeffs], axis=1
    )
    u_div = u_star.modal()[:, 1 : n_div + 1]
    rhs = np.hstack(
        [
            sigma @ edge_rows.T,
            -lambda_h * mesh.determinants[:, None] * u_div,
            np.einsum("kbc,kc->kb", vol_rows, sigma),
        ]
    )
    local = _batched_solve(system, rhs, "sigma_h* moment")

    dofmap = build_dofmap(mesh, SpaceTag.SIGMA_STAR, k)
    coefficients = np.zeros(dofmap.n_dofs)
    coefficients[dofmap.cell_dofs] = local * dofmap.cell_signs
    return FEFunction(mesh, dofmap, coefficients)


def postprocess(solution: MixedEigenSolution) -> PostProcessed:
    """Run all post-processings for one eigen solve."""
    u_star = postprocess_u(solution.u_h, solution.sigma_h)
    u_star2 = oswald_average(u_star)
    lambda_star = postprocess_lambda(solution.sigma_h, u_star)
    sigma_star = postprocess_sigma(solution.sigma_h, u_star, solution.lambda_h)
    logger.info(
        "Post-processing: lambda_h=%.15g lambda_h*=%.15g", solution.lambda_h, lambda_star
    )
    return PostProcessed(
        u_star=u_star, u_star2=u_star2, lambda_star=lambda_star, sigma_star=sigma_star
    )
