"""Orthonormal modal polynomials on the reference triangle.

The scalar basis is the collapsed-coordinate (Dubiner) basis, scaled to unit
L2 norm on the reference triangle and ordered by total degree, so truncating
a coefficient vector to the first dim_poly(l) entries is the L2 projection
onto polynomials of degree l.

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

from functools import lru_cache

import numpy as np
from scipy.special import eval_jacobi, eval_legendre


REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
REFERENCE_VERTICES.flags.writeable = False


def dim_poly(m: int) -> int:
    """Dimension of the polynomials of total degree <= m in two variables."""
    if m < 0:
        return 0
    return (m + 1) * (m + 2) // 2


@lru_cache(maxsize=None)
def mode_indices(m: int) -> tuple[tuple[int, int], ...]:
    """(p, q) index pairs of the modal basis, ordered by total degree."""
    return tuple((d - q, q) for d in range(m + 1) for q in range(d + 1))


def _collapsed_factors(m: int, x: np.ndarray, y: np.ndarray):
    """Q_p = P_p((2x + y - 1)/(1 - y)) (1 - y)^p with first derivatives.

    Uses the Legendre three-term recurrence in homogeneous form, which stays
    regular at the collapsed vertex y = 1.
    """
    s = 2.0 * x + y - 1.0
    t = 1.0 - y
    ones = np.ones_like(x)
    zeros = np.zeros_like(x)
    q_val, q_dx, q_dy = [ones], [zeros], [zeros]
    if m >= 1:
        q_val.append(s)
        q_dx.append(2.0 * ones)
        q_dy.append(ones)
    for n in range(1, m):
        q_val.append(((2 * n + 1) * s * q_val[n] - n * t**2 * q_val[n - 1]) / (n + 1))
        q_dx.append(
            ((2 * n + 1) * (2.0 * q_val[n] + s * q_dx[n]) - n * t**2 * q_dx[n - 1]) / (n + 1)
        )
        q_dy.append(
            (
                (2 * n + 1) * (q_val[n] + s * q_dy[n])
                - n * (t**2 * q_dy[n - 1] - 2.0 * t * q_val[n - 1])
            )
            / (n + 1)
        )
    return q_val, q_dx, q_dy


def dubiner(m: int, x, y, derivatives: bool = False):
    """Evaluate the orthonormal modal basis of degree m.

    Args:
        m: Total polynomial degree.
        x: Reference x coordinates (any shape).
        y: Reference y coordinates (same shape as x).
        derivatives: Also return the x and y derivatives.

    Returns:
        Array of shape (dim_poly(m), *x.shape), or a tuple
        (values, d/dx, d/dy) when derivatives is set.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    q_val, q_dx, q_dy = _collapsed_factors(m, x, y)
    z = 2.0 * y - 1.0
    n_modes = dim_poly(m)
    values = np.empty((n_modes,) + x.shape)
    dx = np.empty_like(values) if derivatives else None
    dy = np.empty_like(values) if derivatives else None
    for index, (p, q) in enumerate(mode_indices(m)):
        scale = np.sqrt(2.0 * (2 * p + 1) * (p + q + 1))
        r_val = eval_jacobi(q, 2 * p + 1, 0, z)
        values[index] = scale * q_val[p] * r_val
        if derivatives:
            if q > 0:
                r_dy = (q + 2 * p + 2) * eval_jacobi(q - 1, 2 * p + 2, 1, z)
            else:
                r_dy = np.zeros_like(z)
            dx[index] = scale * q_dx[p] * r_val
            dy[index] = scale * (q_dy[p] * r_val + q_val[p] * r_dy)
    if derivatives:
        return values, dx, dy
    return values


def edge_legendre(n_modes: int, t) -> np.ndarray:
    """Legendre polynomials P_0..P_{n_modes-1} on [0, 1], shape (n_modes, *t.shape)."""
    t = np.asarray(t, dtype=float)
    return np.stack([eval_legendre(j, 2.0 * t - 1.0) for j in range(n_modes)])


def edge_points(edge: int, t) -> np.ndarray:
    """Reference points on local edge `edge` at parameters t.

    Local edge i is opposite vertex i and runs from vertex i+1 to vertex i+2
    (indices mod 3), i.e. counter-clockwise.
    """
    t = np.asarray(t, dtype=float)
    start = REFERENCE_VERTICES[(edge + 1) % 3]
    end = REFERENCE_VERTICES[(edge + 2) % 3]
    return start + t[..., None] * (end - start)


def edge_normal(edge: int) -> np.ndarray:
    """Outward normal of a reference edge scaled by the edge length."""
    start = REFERENCE_VERTICES[(edge + 1) % 3]
    end = REFERENCE_VERTICES[(edge + 2) % 3]
    tangent = end - start
    return np.array([tangent[1], -tangent[0]])


@lru_cache(maxsize=None)
def lagrange_nodes(m: int) -> np.ndarray:
    """Principal lattice of degree m ordered vertices, edges, interior.

    Edge nodes of local edge i follow the counter-clockwise direction of the
    edge; interior nodes are listed row by row.
    """
    nodes = [REFERENCE_VERTICES[i] for i in range(3)]
    for edge in range(3):
        steps = np.arange(1, m) / m
        nodes.extend(edge_points(edge, steps))
    for j in range(1, m):
        for i in range(1, m - j):
            nodes.append(np.array([i / m, j / m]))
    result = np.array(nodes, dtype=float).reshape(-1, 2)
    result.flags.writeable = False
    return result
