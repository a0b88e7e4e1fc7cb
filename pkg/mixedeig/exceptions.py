"""Custom exceptions for mixedeig.

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


class MixedEigError(Exception):
    """Base exception for all mixedeig errors."""
    pass


class ConfigurationError(MixedEigError):
    """Configuration validation errors."""
    pass


class MeshError(MixedEigError):
    """Invalid triangulations, marked sets or mesh files."""
    pass


class QuadratureError(MixedEigError):
    """Unsupported quadrature requests."""
    pass


class BasisError(MixedEigError):
    """Singular DOF systems or degenerate element maps."""
    pass


class SolverError(MixedEigError):
    """Saddle point factorization or eigen iteration failures."""
    pass


class PostprocessError(MixedEigError):
    """Local post-processing systems that cannot be solved."""
    pass


class EstimatorError(MixedEigError):
    """Estimator requests that lack the data they need."""
    pass
