"""Constants used throughout mixedeig.

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

import math

# Supported orders
MIN_ORDER = 1
MAX_ORDER = 4
MAX_SCALAR_DEGREE = 8
MAX_QUADRATURE_DEGREE = 30
SQUARE_ORDERS = (1, 2, 3)
LSHAPE_ORDERS = (2, 3)
MAX_SQUARE_LEVELS = 7

# Meshes
SQUARE_INITIAL_N = 4
LSHAPE_INITIAL_N = 1
GEOMETRY_TOL = 1e-12

# Quadrature
ERROR_QUADRATURE_DEGREE = 20

# Basis construction
MAX_SCALED_CONDITION = 1e12

# Eigen solver
DEFAULT_TOL = 1e-13
DEFAULT_MAX_ITER = 500
VECTOR_TOL = 1e-12
STAGNATION_RATIO = 0.9

# Unit square problem
SQUARE_EIGENVALUE = 2.0 * math.pi**2

# L-shape problem (all digits except the last two are certified)
LSHAPE_REFERENCE_EIGENVALUE = 9.6397238440219
MARKING_FRACTION = 0.25
DEFAULT_MAX_DOFS = 200_000

# Rates
ROUNDING_FLOOR = 1e-11
CSV_FLOAT_FORMAT = "%.17g"

# Invariant suite tolerances
TOL_DIVERGENCE = 1e-10
TOL_PROJECTION = 1e-11
TOL_TRACE = 1e-10
TOL_CONFORMITY = 1e-10
TOL_LAMBDA_NORM = 1e-10
TOL_LAMMINLAMH = 1e-8
TOL_AUX = 1e-9
TOL_MEAN_VALUE = 1e-11
TOL_UNISOLVENCE_CONDITION = 1e8
TOL_BUBBLE = 1e-12
TOL_RESIDUAL = 1e-9

# Elements per block when integrating against exact solutions
QUADRATURE_CHUNK = 4096
