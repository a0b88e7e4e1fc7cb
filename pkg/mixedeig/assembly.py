"""Global DOF numbering, finite element functions, mixed matrices and norms.

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
from enum import Enum
import logging

import numpy as np
import scipy.sparse as sp

from mixedeig.constants import ERROR_QUADRATURE_DEGREE
from mixedeig.exceptions import MixedEigError
from mixedeig.femcore import (
    LocalSpace,
    SpaceKind,
    derivative_matrices,
    make_bdm_space,
    make_reduced_space,
    make_scalar_space,
    piola_map,
)
from mixedeig.mesh import Mesh
from mixedeig.polynomials import REFERENCE_VERTICES, dim_poly, dubiner
from mixedeig.quadrature import line_quadrature, quadrature

logger = logging.getLogger(__name__)


class SpaceTag(str, Enum):
    """Global spaces of the discretization."""
    U = "U_h"
    SIGMA = "Sigma_h"
    U_STAR = "U_h*"
    U_STAR2 = "U_h**"
    SIGMA_STAR = "Sigma_h*"


def local_space(tag: SpaceTag, k: int) -> LocalSpace:
    """Reference space behind a global space of order k."""
    if tag is SpaceTag.U:
        return make_scalar_space(k)
    if tag is SpaceTag.SIGMA:
        return make_bdm_space(k)
    if tag is SpaceTag.U_STAR:
        return make_scalar_space(k + 2)
    if tag is SpaceTag.U_STAR2:
        return make_scalar_space(k + 2, modal=False)
    return make_reduced_space(k)


@dataclass(frozen=True, eq=False)
class DofMap:
    """Local-to-global DOF numbering of one space on one mesh.

    `cell_dofs[K, i]` is the global index of local DOF i on triangle K and
    `cell_signs[K, i]` the factor relating the global basis function to the
    Piola-mapped local one (edge modes of H(div) spaces flip with the edge
    orientation).
    """

    tag: SpaceTag
    k: int
    n_dofs: int
    cell_dofs: np.ndarray
    cell_signs: np.ndarray
    vertex_range: tuple[int, int]
    edge_range: tuple[int, int]
    interior_range: tuple[int, int]


def build_dofmap(mesh: Mesh, tag: SpaceTag, k: int) -> DofMap:
    """Number DOFs: vertices (Lagrange), then edges, then interiors per triangle."""
    space = local_space(tag, k)
    n_tri = mesh.n_triangles
    rows = np.arange(n_tri)[:, None]
    n_int = space.interior_dofs

    if space.kind is SpaceKind.SCALAR_DG:
        cell_dofs = rows * space.dim + np.arange(space.dim)
        signs = np.ones(cell_dofs.shape)
        vertex_range = edge_range = (0, 0)
        interior_range = (0, n_tri * space.dim)
    elif space.is_vector:
        per_edge = space.edge_dofs
        n_edge = mesh.n_edges * per_edge
        modes = np.arange(per_edge)
        edge_part = mesh.edge_of_triangle[:, :, None] * per_edge + modes
        flipped = np.where(modes % 2 == 1, 1.0, -1.0)
        edge_signs = np.where(mesh.edge_sign[:, :, None] > 0, 1.0, flipped)
        interior = n_edge + rows * n_int + np.arange(n_int)
        cell_dofs = np.hstack([edge_part.reshape(n_tri, -1), interior])
        signs = np.hstack([edge_signs.reshape(n_tri, -1), np.ones((n_tri, n_int))])
        vertex_range = (0, 0)
        edge_range = (0, n_edge)
        interior_range = (n_edge, n_edge + n_tri * n_int)
    else:
        m = space.order
        n_vert = mesh.n_vertices
        steps = np.arange(1, m)
        position = np.where(mesh.edge_sign[:, :, None] > 0, steps, m - steps)
        edge_part = n_vert + mesh.edge_of_triangle[:, :, None] * (m - 1) + position - 1
        n_edge = mesh.n_edges * (m - 1)
        interior = n_vert + n_edge + rows * n_int + np.arange(n_int)
        cell_dofs = np.hstack([mesh.triangles, edge_part.reshape(n_tri, -1), interior])
        signs = np.ones(cell_dofs.shape)
        vertex_range = (0, n_vert)
        edge_range = (n_vert, n_vert + n_edge)
        interior_range = (n_vert + n_edge, n_vert + n_edge + n_tri * n_int)

    cell_dofs = cell_dofs.astype(np.int64)
    cell_dofs.flags.writeable = False
    signs.flags.writeable = False
    return DofMap(
        tag=tag,
        k=k,
        n_dofs=int(interior_range[1]),
        cell_dofs=cell_dofs,
        cell_signs=signs,
        vertex_range=vertex_range,
        edge_range=edge_range,
        interior_range=interior_range,
    )


@dataclass(eq=False)
class FEFunction:
    """Global coefficient vector of a space, evaluable element-wise."""

    mesh: Mesh
    dofmap: DofMap
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.dofmap.n_dofs,):
            raise MixedEigError(
                f"{self.tag.value}: expected {self.dofmap.n_dofs} coefficients, "
                f"got {self.coefficients.shape}"
            )

    @property
    def tag(self) -> SpaceTag:
        return self.dofmap.tag

    @property
    def space(self) -> LocalSpace:
        return local_space(self.dofmap.tag, self.dofmap.k)

    def local_dofs(self, elements=slice(None)) -> np.ndarray:
        """Coefficients of the Piola-mapped local basis per element."""
        dofmap = self.dofmap
        return self.coefficients[dofmap.cell_dofs[elements]] * dofmap.cell_signs[elements]

    def modal(self, elements=slice(None)) -> np.ndarray:
        """Reference modal coefficients per element, shape (n, n_coef)."""
        return self.local_dofs(elements) @ self.space.coeffs.T

    def values(self, xy: np.ndarray, elements=slice(None)) -> np.ndarray:
        """Physical values at mapped reference points: (n, npts) or (n, npts, 2)."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        space = self.space
        psi = dubiner(space.poly_degree, xy[:, 0], xy[:, 1])
        modal = self.modal(elements)
        if not space.is_vector:
            return modal @ psi
        n = space.n_modes
        reference = np.stack([modal[:, :n] @ psi, modal[:, n:] @ psi], axis=-1)
        return piola_map(self.mesh.jacobians[elements], self.mesh.determinants[elements], reference)

    def gradients(self, xy: np.ndarray, elements=slice(None)) -> np.ndarray:
        """Physical gradients of a scalar function, shape (n, npts, 2)."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        space = self.space
        if space.is_vector:
            raise MixedEigError(f"{self.tag.value} is a vector space")
        _, dx, dy = dubiner(space.poly_degree, xy[:, 0], xy[:, 1], derivatives=True)
        modal = self.modal(elements)
        reference = np.stack([modal @ dx, modal @ dy], axis=-1)
        inverse = self.mesh.inverse_jacobians[elements]
        return np.einsum("kji,kpj->kpi", inverse, reference)

    def divergences(self, xy: np.ndarray, elements=slice(None)) -> np.ndarray:
        """Physical divergence of a vector function, shape (n, npts)."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        space = self.space
        if not space.is_vector:
            raise MixedEigError(f"{self.tag.value} is a scalar space")
        _, dx, dy = dubiner(space.poly_degree, xy[:, 0], xy[:, 1], derivatives=True)
        modal = self.modal(elements)
        n = space.n_modes
        reference = modal[:, :n] @ dx + modal[:, n:] @ dy
        return reference / self.mesh.determinants[elements][:, None]

    def edge_traces(self, t: np.ndarray) -> np.ndarray:
        """Values on every edge from both adjacent triangles.

        Args:
            t: Parameters in [0, 1] along the global edge direction.

        Returns:
            Array (nE, 2, nt) for scalar or (nE, 2, nt, 2) for vector
            functions; side 1 of boundary edges is zero.
        """
        t = np.asarray(t, dtype=float)
        mesh = self.mesh
        space = self.space
        shape = (mesh.n_edges, 2, len(t)) + ((2,) if space.is_vector else ())
        traces = np.zeros(shape)
        for side in (0, 1):
            triangles = mesh.edge_triangles[:, side]
            valid = triangles >= 0
            owner = triangles[valid]
            local = mesh.edge_local[valid, side]
            forward = mesh.edge_sign[owner, local] > 0
            local_t = np.where(forward[:, None], t[None, :], 1.0 - t[None, :])
            start = REFERENCE_VERTICES[(local + 1) % 3]
            end = REFERENCE_VERTICES[(local + 2) % 3]
            xy = start[:, None, :] + local_t[..., None] * (end - start)[:, None, :]
            psi = dubiner(space.poly_degree, xy[..., 0], xy[..., 1])
            modal = self.modal(owner)
            if not space.is_vector:
                traces[valid, side] = np.einsum("kp,pkt->kt", modal, psi)
                continue
            n = space.n_modes
            reference = np.stack(
                [
                    np.einsum("kp,pkt->kt", modal[:, :n], psi),
                    np.einsum("kp,pkt->kt", modal[:, n:], psi),
                ],
                axis=-1,
            )
            traces[valid, side] = piola_map(
                mesh.jacobians[owner], mesh.determinants[owner], reference
            )
        return traces


@dataclass(eq=False)
class MixedSystem:
    """Matrices of the discrete mixed eigenvalue problem on one mesh.

    A is the mass matrix of Sigma_h, B[v, i] = (div phi_i, psi_v) and M the
    (diagonal) mass matrix of U_h.
    """

    mesh: Mesh
    k: int
    sigma_dofs: DofMap
    u_dofs: DofMap
    A: sp.csr_matrix
    B: sp.csr_matrix
    M: sp.csr_matrix

    @property
    def n_dofs(self) -> int:
        return self.sigma_dofs.n_dofs + self.u_dofs.n_dofs

    def matrices(self) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
        return self.A, self.B, self.M


def _scatter(rows: np.ndarray, cols: np.ndarray, blocks: np.ndarray, shape: tuple[int, int]):
    row_index = np.broadcast_to(rows[:, :, None], blocks.shape)
    col_index = np.broadcast_to(cols[:, None, :], blocks.shape)
    matrix = sp.coo_matrix(
        (blocks.ravel(), (row_index.ravel(), col_index.ravel())), shape=shape
    )
    return matrix.tocsr()


def reference_divergence_matrix(k: int) -> np.ndarray:
    """(div phi_i, psi_v) on the reference element for phi in BDM, psi in P^k."""
    space = make_bdm_space(k)
    n = space.n_modes
    d_x, d_y = derivative_matrices(space.poly_degree)
    rows = slice(0, dim_poly(k))
    return d_x[rows] @ space.coeffs[:n] + d_y[rows] @ space.coeffs[n:]


def assemble(mesh: Mesh, k: int) -> MixedSystem:
    """Assemble A, B and M for order k (U_h = P^k, Sigma_h = BDM of degree k + 1).

    All element integrals reduce to products of modal coefficient matrices,
    so the assembly is exact and independent of any quadrature.
    """
    sigma_dofs = build_dofmap(mesh, SpaceTag.SIGMA, k)
    u_dofs = build_dofmap(mesh, SpaceTag.U, k)
    space = make_bdm_space(k)
    n = space.n_modes
    c_x, c_y = space.coeffs[:n], space.coeffs[n:]
    xx, xy, yy = c_x.T @ c_x, c_x.T @ c_y, c_y.T @ c_y

    jac = mesh.jacobians
    det = mesh.determinants
    metric = np.einsum("kai,kaj->kij", jac, jac)
    local_a = (
        metric[:, 0, 0, None, None] * xx
        + metric[:, 0, 1, None, None] * (xy + xy.T)
        + metric[:, 1, 1, None, None] * yy
    ) / det[:, None, None]
    signs = sigma_dofs.cell_signs
    local_a *= signs[:, :, None] * signs[:, None, :]

    local_b = reference_divergence_matrix(k)[None, :, :] * signs[:, None, :]
    n_u = u_dofs.cell_dofs.shape[1]
    local_m = det[:, None, None] * np.eye(n_u)

    n_sigma = sigma_dofs.n_dofs
    n_scalar = u_dofs.n_dofs
    A = _scatter(sigma_dofs.cell_dofs, sigma_dofs.cell_dofs, local_a, (n_sigma, n_sigma))
    B = _scatter(u_dofs.cell_dofs, sigma_dofs.cell_dofs, local_b, (n_scalar, n_sigma))
    M = _scatter(u_dofs.cell_dofs, u_dofs.cell_dofs, local_m, (n_scalar, n_scalar))
    logger.debug(
        "Assembled k=%d on %d triangles: dim Sigma_h=%d, dim U_h=%d, nnz(A)=%d",
        k, mesh.n_triangles, n_sigma, n_scalar, A.nnz,
    )
    return MixedSystem(mesh=mesh, k=k, sigma_dofs=sigma_dofs, u_dofs=u_dofs, A=A, B=B, M=M)


def interpolate(mesh: Mesh, tag: SpaceTag, k: int, f, degree: int = ERROR_QUADRATURE_DEGREE) -> FEFunction:
    """Interpolate a physical field into a discontinuous or H(div) space.

    Scalar spaces use the element-wise L2 projection. H(div) spaces apply the
    DOF functionals to the L2 projection of the pulled-back field, which is
    the canonical interpolant for polynomial fields up to the space degree.

    Args:
        f: Callable f(x, y); vector fields return an array with a trailing
            axis of length 2.
    """
    dofmap = build_dofmap(mesh, tag, k)
    space = local_space(tag, k)
    if space.kind is SpaceKind.LAGRANGE:
        raise MixedEigError("Use nodal evaluation for Lagrange spaces")
    rule = quadrature(degree)
    psi = dubiner(space.poly_degree, rule.xy[:, 0], rule.xy[:, 1]) * rule.weights
    points = mesh.map_points(rule.xy)
    values = np.asarray(f(points[..., 0], points[..., 1]), dtype=float)
    if space.is_vector:
        pulled = np.einsum("kij,kpj->kpi", mesh.inverse_jacobians, values)
        pulled *= mesh.determinants[:, None, None]
        modal = np.hstack([pulled[..., 0] @ psi.T, pulled[..., 1] @ psi.T])
        local = modal @ space.functionals.T
    else:
        local = values @ psi.T
    coefficients = np.zeros(dofmap.n_dofs)
    coefficients[dofmap.cell_dofs] = local * dofmap.cell_signs
    return FEFunction(mesh, dofmap, coefficients)


def element_integrals(mesh: Mesh, weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Integrals over every triangle of point values shaped (nT, npts)."""
    return (values @ weights) * mesh.determinants


def _physical_values(f, mesh: Mesh, xy: np.ndarray) -> np.ndarray:
    if isinstance(f, FEFunction):
        return f.values(xy)
    points = mesh.map_points(xy)
    return np.asarray(f(points[..., 0], points[..., 1]), dtype=float)


def norm_L2(f, mesh: Mesh, degree: int = ERROR_QUADRATURE_DEGREE) -> float:
    """L2 norm over the mesh of an FEFunction or a callable f(x, y)."""
    rule = quadrature(degree)
    values = _physical_values(f, mesh, rule.xy)
    squared = values**2 if values.ndim == 2 else np.sum(values**2, axis=-1)
    return float(np.sqrt(np.sum(element_integrals(mesh, rule.weights, squared))))


def jump_seminorm_squared(u_h: FEFunction, include_boundary: bool = True, degree: int = ERROR_QUADRATURE_DEGREE) -> float:
    """Sum over edges of (1/h_F) ||[u_h]||_F^2; the boundary jump is the trace."""
    t, w = line_quadrature(degree)
    traces = u_h.edge_traces(t)
    jumps = traces[:, 0] - traces[:, 1]
    if not include_boundary:
        jumps = jumps[~u_h.mesh.boundary_edge]
    # ds = h_F dt cancels the 1/h_F weight
    return float(np.sum(jumps**2 @ w))


def broken_h1_norm(u_h: FEFunction, grad_u=None, degree: int = ERROR_QUADRATURE_DEGREE) -> float:
    """||u - u_h||_{1,h} for a discontinuous scalar function.

    Args:
        u_h: Scalar FEFunction.
        grad_u: Callable returning the exact gradient (trailing axis 2), or
            None to measure u_h itself.
        degree: Quadrature degree for element and edge integrals.
    """
    mesh = u_h.mesh
    rule = quadrature(degree)
    difference = -u_h.gradients(rule.xy)
    if grad_u is not None:
        difference += _physical_values(grad_u, mesh, rule.xy)
    volume = np.sum(element_integrals(mesh, rule.weights, np.sum(difference**2, axis=-1)))
    return float(np.sqrt(volume + jump_seminorm_squared(u_h, degree=degree)))


def normal_jumps(sigma: FEFunction, degree: int = 8) -> np.ndarray:
    """Normal-trace jumps across interior edges at edge quadrature points."""
    t, _ = line_quadrature(degree)
    traces = sigma.edge_traces(t)
    normal = sigma.mesh.edge_normals[:, None, None, :]
    flux = np.sum(traces * normal, axis=-1)
    interior = ~sigma.mesh.boundary_edge
    return (flux[:, 0] - flux[:, 1])[interior]
