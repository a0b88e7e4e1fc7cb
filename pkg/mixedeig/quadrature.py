"""Quadrature rules on the reference triangle and the unit interval.

The reference triangle has vertices (0, 0), (1, 0), (0, 1). Points are stored
as barycentric triples (l0, l1, l2) with x = l1 and y = l2.

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
from functools import lru_cache
import itertools

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from mixedeig.constants import MAX_QUADRATURE_DEGREE
from mixedeig.exceptions import QuadratureError


@dataclass(frozen=True, eq=False)
class QuadRule:
    """Quadrature rule on the reference triangle."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def xy(self) -> np.ndarray:
        """Cartesian reference coordinates, shape (n, 2)."""
        return self.points[:, 1:]

    def __len__(self) -> int:
        return len(self.weights)


def _points_per_direction(degree: int) -> int:
    # Gauss rules with n points are exact to degree 2n - 1
    return max(1, (degree + 2) // 2)


def _collapsed_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Conical product of Gauss-Jacobi(1, 0) and Gauss-Legendre rules."""
    n = _points_per_direction(degree)
    x01, w01 = roots_jacobi(n, 1, 0)
    x00, w00 = roots_legendre(n)
    x = (x01 + 1.0) / 2.0
    t = (x00 + 1.0) / 2.0
    px = np.repeat(x, n)
    py = np.outer(1.0 - x, t).ravel()
    weights = np.outer(w01, w00).ravel() / 8.0
    points = np.column_stack([1.0 - px - py, px, py])
    return points, weights


def _symmetrize(points: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    orbit_points = np.concatenate(
        [points[:, list(perm)] for perm in itertools.permutations(range(3))]
    )
    orbit_weights = np.tile(weights, 6) / 6.0
    keys = np.round(orbit_points, 13)
    unique, first, inverse = np.unique(
        keys, axis=0, return_index=True, return_inverse=True
    )
    inverse = inverse.reshape(-1)
    merged = np.bincount(inverse, weights=orbit_weights, minlength=len(unique))
    return orbit_points[first], merged


@lru_cache(maxsize=None)
def quadrature(degree: int, symmetric: bool = True) -> QuadRule:
    """Return a positive quadrature rule on the reference triangle.

    Args:
        degree: Polynomial degree integrated exactly (0..30).
        symmetric: Average the rule over the six vertex permutations.
            Pass False for the plain conical product rule.

    Returns:
        QuadRule whose weights sum to 1/2.

    Raises:
        QuadratureError: If the degree is outside the supported range.
    """
    if not 0 <= degree <= MAX_QUADRATURE_DEGREE:
        raise QuadratureError(
            f"Quadrature degree {degree} outside supported range 0..{MAX_QUADRATURE_DEGREE}"
        )
    if degree <= 1:
        points = np.array([[1.0, 1.0, 1.0]]) / 3.0
        weights = np.array([0.5])
    else:
        points, weights = _collapsed_rule(degree)
        if symmetric:
            points, weights = _symmetrize(points, weights)
    points.flags.writeable = False
    weights.flags.writeable = False
    return QuadRule(points=points, weights=weights, degree=degree)


@lru_cache(maxsize=None)
def line_quadrature(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1] exact to `degree`, as (points, weights)."""
    if not 0 <= degree <= 2 * MAX_QUADRATURE_DEGREE:
        raise QuadratureError(f"Line quadrature degree {degree} out of range")
    x, w = roots_legendre(_points_per_direction(degree))
    points = (x + 1.0) / 2.0
    weights = w / 2.0
    points.flags.writeable = False
    weights.flags.writeable = False
    return points, weights
