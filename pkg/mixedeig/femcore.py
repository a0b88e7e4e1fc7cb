"""Reference element spaces: scalar modal and Lagrange bases, BDM and reduced-trace H(div) spaces, normal bubbles, Piola maps and L2 projection.

Every space is a coefficient matrix over the orthonormal modal basis (scalar
spaces) or its componentwise vector version (H(div) spaces, x block first).
Degree changes are zero padding, L2 inner products are coefficient dot
products and the H(div) dual bases come from inverting the DOF Vandermonde.

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
from functools import cached_property, lru_cache
import logging

import numpy as np
from scipy.linalg import null_space

from mixedeig.constants import (
    ERROR_QUADRATURE_DEGREE,
    GEOMETRY_TOL,
    MAX_ORDER,
    MAX_SCALAR_DEGREE,
    MAX_SCALED_CONDITION,
    MIN_ORDER,
)
from mixedeig.exceptions import BasisError
from mixedeig.polynomials import (
    dim_poly,
    dubiner,
    edge_legendre,
    edge_normal,
    edge_points,
    lagrange_nodes,
)
from mixedeig.quadrature import line_quadrature, quadrature

logger = logging.getLogger(__name__)


class SpaceKind(str, Enum):
    """Local space families."""
    SCALAR_DG = "scalar_dg"
    LAGRANGE = "lagrange"
    HDIV_BDM = "hdiv_bdm"
    HDIV_REDUCED = "hdiv_reduced"


@dataclass(frozen=True, eq=False)
class LocalSpace:
    """Element-local polynomial space on the reference triangle.

    Attributes:
        kind: Space family.
        order: m for scalar, Lagrange and BDM spaces, k for the reduced space.
        poly_degree: Degree of the modal representation.
        coeffs: Modal coefficients of the basis, shape (n_coef, dim).
        functionals: DOF functionals acting on modal coefficients, shape (dim, n_coef).
        vertex_dofs: DOFs per vertex.
        edge_dofs: DOFs per edge.
        interior_dofs: DOFs attached to the element interior.
        constraints: Trace-reduction functionals annihilating the space, if any.
    """

    kind: SpaceKind
    order: int
    poly_degree: int
    coeffs: np.ndarray
    functionals: np.ndarray
    vertex_dofs: int = 0
    edge_dofs: int = 0
    interior_dofs: int = 0
    constraints: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    @property
    def is_vector(self) -> bool:
        return self.kind in (SpaceKind.HDIV_BDM, SpaceKind.HDIV_REDUCED)

    @property
    def n_modes(self) -> int:
        return dim_poly(self.poly_degree)

    def vandermonde(self) -> np.ndarray:
        """dof_i(phi_j) on the reference element."""
        return self.functionals @ self.coeffs

    def values(self, xy: np.ndarray) -> np.ndarray:
        """Basis values at reference points: (npts, dim) or (npts, dim, 2)."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        psi = dubiner(self.poly_degree, xy[:, 0], xy[:, 1]).T
        if not self.is_vector:
            return psi @ self.coeffs
        n = self.n_modes
        return np.stack([psi @ self.coeffs[:n], psi @ self.coeffs[n:]], axis=-1)

    def gradients(self, xy: np.ndarray) -> np.ndarray:
        """Reference gradients of a scalar basis, shape (npts, dim, 2)."""
        if self.is_vector:
            raise BasisError(f"{self.kind.value} space has no scalar gradient")
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        _, dx, dy = dubiner(self.poly_degree, xy[:, 0], xy[:, 1], derivatives=True)
        return np.stack([dx.T @ self.coeffs, dy.T @ self.coeffs], axis=-1)

    def divergences(self, xy: np.ndarray) -> np.ndarray:
        """Reference divergences of a vector basis, shape (npts, dim)."""
        if not self.is_vector:
            raise BasisError(f"{self.kind.value} space has no divergence")
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        _, dx, dy = dubiner(self.poly_degree, xy[:, 0], xy[:, 1], derivatives=True)
        n = self.n_modes
        return dx.T @ self.coeffs[:n] + dy.T @ self.coeffs[n:]


@dataclass(frozen=True, eq=False)
class BubbleSpace:
    """Divergence-free vector polynomials with zero normal trace.

    Spanned by the curls (dw/dy, -dw/dx) of w = b q, with b = xy(1 - x - y)
    the cubic bubble and q of degree `degree` - 2.
    """

    degree: int
    coeffs: np.ndarray

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    @cached_property
    def orthonormal(self) -> np.ndarray:
        """Orthonormal basis of the same span, as modal coefficient columns."""
        if self.dim == 0:
            return self.coeffs
        q, _ = np.linalg.qr(self.coeffs)
        return q

    def values(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        psi = dubiner(self.degree, xy[:, 0], xy[:, 1]).T
        n = dim_poly(self.degree)
        return np.stack([psi @ self.coeffs[:n], psi @ self.coeffs[n:]], axis=-1)

    def divergences(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        _, dx, dy = dubiner(self.degree, xy[:, 0], xy[:, 1], derivatives=True)
        n = dim_poly(self.degree)
        return dx.T @ self.coeffs[:n] + dy.T @ self.coeffs[n:]


@lru_cache(maxsize=None)
def derivative_matrices(m: int) -> tuple[np.ndarray, np.ndarray]:
    """D[r, b] = (psi_r, d psi_b) on the reference triangle for d = d/dx, d/dy.

    Derivatives of degree-m modes have degree m - 1, so column b of D holds
    the exact modal coefficients of d psi_b.
    """
    rule = quadrature(max(2 * m, 1))
    x, y = rule.xy.T
    psi, dx, dy = dubiner(m, x, y, derivatives=True)
    weighted = psi * rule.weights
    d_x = weighted @ dx.T
    d_y = weighted @ dy.T
    d_x.flags.writeable = False
    d_y.flags.writeable = False
    return d_x, d_y


def edge_moment_matrix(m: int, n_modes: int) -> np.ndarray:
    """Normal-flux moments against edge Legendre modes, shape (3 n_modes, 2 dim_poly(m)).

    Row (i, j) maps vector modal coefficients to the integral over local
    edge i of tau.n P_j, with P_j running along the counter-clockwise edge
    direction.
    """
    t, w = line_quadrature(m + n_modes)
    legendre = edge_legendre(n_modes, t) * w
    blocks = []
    for edge in range(3):
        points = edge_points(edge, t)
        psi = dubiner(m, points[:, 0], points[:, 1])
        base = legendre @ psi.T
        normal = edge_normal(edge)
        blocks.append(np.hstack([normal[0] * base, normal[1] * base]))
    return np.vstack(blocks)


def div_moment_matrix(m: int, l: int) -> np.ndarray:
    """Divergence moments against modes 1..dim_poly(l) - 1 (P^l modulo constants)."""
    d_x, d_y = derivative_matrices(m)
    rows = slice(1, dim_poly(l))
    return np.hstack([d_x[rows], d_y[rows]])


def _dual_basis(functionals: np.ndarray, span: np.ndarray, label: str) -> np.ndarray:
    vandermonde = functionals @ span
    if vandermonde.shape[0] != vandermonde.shape[1]:
        raise BasisError(
            f"{label}: {vandermonde.shape[0]} DOFs for a space of dimension {vandermonde.shape[1]}"
        )
    condition = scaled_condition(vandermonde)
    logger.debug("%s DOF Vandermonde scaled condition %.3e", label, condition)
    if not np.isfinite(condition) or condition > MAX_SCALED_CONDITION:
        raise BasisError(f"{label}: singular DOF Vandermonde (scaled condition {condition:.3e})")
    return np.linalg.solve(vandermonde.T, span.T).T


def scaled_condition(matrix: np.ndarray) -> float:
    """Condition number after scaling every row to unit max-norm."""
    scale = np.abs(matrix).max(axis=1, keepdims=True)
    if np.any(scale == 0.0):
        return float("inf")
    try:
        return float(np.linalg.cond(matrix / scale))
    except np.linalg.LinAlgError:
        return float("inf")


def _check_order(k: int) -> None:
    if not MIN_ORDER <= k <= MAX_ORDER:
        raise BasisError(f"Order k={k} outside supported range {MIN_ORDER}..{MAX_ORDER}")


def _freeze(*arrays: np.ndarray) -> None:
    for array in arrays:
        array.flags.writeable = False


@lru_cache(maxsize=None)
def make_bubble_space(degree: int) -> BubbleSpace:
    """Normal bubbles of polynomial degree `degree`."""
    n_modes = dim_poly(degree)
    n_bubbles = dim_poly(degree - 2)
    if n_bubbles == 0:
        return BubbleSpace(degree=degree, coeffs=np.zeros((2 * n_modes, 0)))
    rule = quadrature(2 * degree)
    x, y = rule.xy.T
    q, q_dx, q_dy = dubiner(degree - 2, x, y, derivatives=True)
    bubble = x * y * (1.0 - x - y)
    bubble_dx = y * (1.0 - 2.0 * x - y)
    bubble_dy = x * (1.0 - x - 2.0 * y)
    w_dx = bubble_dx * q + bubble * q_dx
    w_dy = bubble_dy * q + bubble * q_dy
    weighted = dubiner(degree, x, y) * rule.weights
    coeffs = np.vstack([weighted @ w_dy.T, -(weighted @ w_dx.T)])
    _freeze(coeffs)
    return BubbleSpace(degree=degree, coeffs=coeffs)


@lru_cache(maxsize=None)
def make_scalar_space(m: int, modal: bool = True) -> LocalSpace:
    """Scalar polynomials of degree m: orthonormal modal or nodal Lagrange basis."""
    if not 0 <= m <= MAX_SCALAR_DEGREE:
        raise BasisError(f"Scalar degree {m} outside supported range 0..{MAX_SCALAR_DEGREE}")
    n_modes = dim_poly(m)
    if modal:
        identity = np.eye(n_modes)
        _freeze(identity)
        return LocalSpace(
            kind=SpaceKind.SCALAR_DG,
            order=m,
            poly_degree=m,
            coeffs=identity,
            functionals=identity,
            interior_dofs=n_modes,
        )
    if m < 1:
        raise BasisError("Lagrange spaces need degree >= 1")
    nodes = lagrange_nodes(m)
    functionals = dubiner(m, nodes[:, 0], nodes[:, 1]).T
    coeffs = _dual_basis(functionals, np.eye(n_modes), f"lagrange({m})")
    _freeze(functionals, coeffs)
    return LocalSpace(
        kind=SpaceKind.LAGRANGE,
        order=m,
        poly_degree=m,
        coeffs=coeffs,
        functionals=functionals,
        vertex_dofs=1,
        edge_dofs=m - 1,
        interior_dofs=(m - 1) * (m - 2) // 2,
    )


@lru_cache(maxsize=None)
def make_bdm_space(k: int) -> LocalSpace:
    """BDM space of degree k + 1 paired with discontinuous P^k.

    DOFs, in order: edge moments against P^{k+1} on edges 0, 1, 2; divergence
    moments against P^k modulo constants; moments against the normal bubbles
    of degree k + 1.
    """
    _check_order(k)
    m = k + 1
    functionals = np.vstack(
        [
            edge_moment_matrix(m, k + 2),
            div_moment_matrix(m, k),
            make_bubble_space(m).orthonormal.T,
        ]
    )
    coeffs = _dual_basis(functionals, np.eye(2 * dim_poly(m)), f"hdiv_bdm({m})")
    _freeze(functionals, coeffs)
    return LocalSpace(
        kind=SpaceKind.HDIV_BDM,
        order=m,
        poly_degree=m,
        coeffs=coeffs,
        functionals=functionals,
        edge_dofs=k + 2,
        interior_dofs=coeffs.shape[1] - 3 * (k + 2),
    )


@lru_cache(maxsize=None)
def make_reduced_space(k: int) -> LocalSpace:
    """Vector P^{k+3} with normal traces restricted to P^{k+1} on every edge.

    The span is the null space of the six functionals that test the normal
    trace against the edge Legendre modes k + 2 and k + 3. DOFs, in order:
    edge moments against P^{k+1}, divergence moments against P^{k+2} modulo
    constants, moments against the normal bubbles of degree k + 3.
    """
    _check_order(k)
    m = k + 3
    all_modes = edge_moment_matrix(m, k + 4).reshape(3, k + 4, -1)
    constraints = all_modes[:, k + 2:, :].reshape(6, -1)
    span = null_space(constraints)
    functionals = np.vstack(
        [
            all_modes[:, : k + 2, :].reshape(3 * (k + 2), -1),
            div_moment_matrix(m, k + 2),
            make_bubble_space(m).orthonormal.T,
        ]
    )
    coeffs = _dual_basis(functionals, span, f"hdiv_reduced({k})")
    _freeze(functionals, coeffs, constraints)
    return LocalSpace(
        kind=SpaceKind.HDIV_REDUCED,
        order=k,
        poly_degree=m,
        coeffs=coeffs,
        functionals=functionals,
        edge_dofs=k + 2,
        interior_dofs=coeffs.shape[1] - 3 * (k + 2),
        constraints=constraints,
    )


def piola_map(jacobian: np.ndarray, det: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Contravariant Piola transform tau = J tau_hat / det J.

    Args:
        jacobian: Element Jacobians, shape (nT, 2, 2), or a single (2, 2) matrix.
        det: Jacobian determinants, shape (nT,) or scalar.
        vectors: Reference vectors with leading element axis and trailing
            component axis, e.g. (nT, npts, 2).

    Raises:
        BasisError: If a Jacobian determinant vanishes.
    """
    jacobian = np.asarray(jacobian, dtype=float)
    if jacobian.ndim == 2:
        return piola_map(jacobian[None], np.atleast_1d(det), np.asarray(vectors)[None])[0]
    det = np.asarray(det, dtype=float)
    # relative to the size of each element
    scale = np.abs(jacobian).reshape(len(jacobian), -1).max(axis=1) ** 2
    if np.any(np.abs(det) <= GEOMETRY_TOL * scale):
        raise BasisError("Degenerate element map: zero Jacobian determinant")
    mapped = np.einsum("kij,k...j->k...i", jacobian, vectors)
    return mapped / det.reshape(det.shape + (1,) * (mapped.ndim - 1))


def piola_divergence(det: np.ndarray, reference_divergence: np.ndarray) -> np.ndarray:
    """Physical divergence of a Piola-mapped field: div_hat tau_hat / det J."""
    det = np.asarray(det, dtype=float)
    return reference_divergence / det.reshape(det.shape + (1,) * (reference_divergence.ndim - 1))


def project(l: int, f, mesh, degree: int = ERROR_QUADRATURE_DEGREE) -> np.ndarray:
    """L2 projection onto P^l on every element of `mesh`.

    Args:
        l: Target polynomial degree.
        f: Callable f(x, y) evaluated at physical points.
        mesh: Anything exposing `map_points` (normally a Mesh).
        degree: Quadrature exactness degree.

    Returns:
        Modal coefficients of shape (n_triangles, dim_poly(l)).
    """
    rule = quadrature(degree)
    psi = dubiner(l, rule.xy[:, 0], rule.xy[:, 1])
    points = mesh.map_points(rule.xy)
    values = np.asarray(f(points[..., 0], points[..., 1]), dtype=float)
    return (values * rule.weights) @ psi.T
