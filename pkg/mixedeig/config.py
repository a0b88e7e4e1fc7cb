"""Run configuration for the command-line front end.

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
from pathlib import Path

from mixedeig.constants import (
    DEFAULT_MAX_DOFS,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    ERROR_QUADRATURE_DEGREE,
    LSHAPE_ORDERS,
    MAX_QUADRATURE_DEGREE,
    MAX_SQUARE_LEVELS,
    SQUARE_ORDERS,
)
from mixedeig.exceptions import ConfigurationError

COMMANDS = ("square", "lshape", "superconv", "verify")
DOMAINS = ("square", "lshape")


@dataclass
class RunConfig:
    """Configuration of one CLI invocation."""

    command: str
    k: int = 1
    levels: int = 5
    max_dofs: int = DEFAULT_MAX_DOFS
    quad_degree: int = ERROR_QUADRATURE_DEGREE
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    output: Path | None = None
    dat_path: Path | None = None
    domain: str = "square"
    uniform: bool = False
    verbose: bool = False
    deterministic: bool = True

    def __post_init__(self) -> None:
        """Validate configuration after initialization."""
        if self.command not in COMMANDS:
            raise ConfigurationError(f"Unknown command {self.command!r}; choose from {', '.join(COMMANDS)}")

        if self.domain not in DOMAINS:
            raise ConfigurationError(f"Unknown domain {self.domain!r}; choose from {', '.join(DOMAINS)}")

        orders = LSHAPE_ORDERS if self.command == "lshape" else SQUARE_ORDERS
        if self.k not in orders:
            raise ConfigurationError(
                f"{self.command}: k must be one of {', '.join(map(str, orders))}, got {self.k}"
            )

        if not 1 <= self.levels <= MAX_SQUARE_LEVELS:
            raise ConfigurationError(f"levels must lie in 1..{MAX_SQUARE_LEVELS}, got {self.levels}")

        if self.max_dofs <= 0:
            raise ConfigurationError("max_dofs must be positive")

        if not 2 * (self.k + 3) <= self.quad_degree <= MAX_QUADRATURE_DEGREE:
            raise ConfigurationError(
                f"quad_degree must lie in {2 * (self.k + 3)}..{MAX_QUADRATURE_DEGREE}, got {self.quad_degree}"
            )

        if not 0.0 < self.tol < 1.0:
            raise ConfigurationError("tol must lie in (0, 1)")

        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")

        if not self.deterministic:
            raise ConfigurationError("Runs are always deterministic")

        if self.output is None:
            self.output = Path(f"{self.command}_k{self.k}.csv")
        self.output = Path(self.output).resolve()
        if self.dat_path is not None:
            self.dat_path = Path(self.dat_path).resolve()
