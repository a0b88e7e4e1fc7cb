import logging

import numpy as np
import pytest

from mixedeig.assembly import assemble
from mixedeig.constants import LSHAPE_REFERENCE_EIGENVALUE, SQUARE_EIGENVALUE
from mixedeig.eigensolve import (
    SaddlePointSolver,
    align_sign,
    initial_iterate,
    inverse_power_iteration,
    mean_weights,
    solve_eigenpair,
    solve_source,
)
from mixedeig.exceptions import SolverError
from mixedeig.mesh import make_lshape, make_unit_square, refine_uniform


@pytest.fixture(scope="module")
def square_solution():
    return solve_eigenpair(assemble(make_unit_square(4), 1))


def test_square_eigenvalue_is_close_to_exact(square_solution):
    assert square_solution.lambda_h == pytest.approx(SQUARE_EIGENVALUE, rel=1e-2)
    assert 2 <= square_solution.iterations <= 60


def test_eigenpair_normalization_and_sign(square_solution):
    system = square_solution.system
    u = square_solution.u_h.coefficients
    assert u @ (system.M @ u) == pytest.approx(1.0, abs=1e-12)
    assert mean_weights(system) @ u > 0


def test_discrete_equations_hold(square_solution):
    system = square_solution.system
    sigma = square_solution.sigma_h.coefficients
    u = square_solution.u_h.coefficients
    lam = square_solution.lambda_h
    assert sigma @ (system.A @ sigma) == pytest.approx(lam, rel=1e-10)
    np.testing.assert_allclose(-(system.B @ sigma), lam * (system.M @ u), atol=1e-10 * lam)
    assert square_solution.residual < 1e-9


def test_start_vector_does_not_change_the_eigenpair(square_solution):
    system = square_solution.system
    start = np.random.default_rng(0).uniform(0.5, 1.5, system.u_dofs.n_dofs)
    other = solve_eigenpair(system, initial=start)
    assert other.lambda_h == pytest.approx(square_solution.lambda_h, rel=1e-12)
    np.testing.assert_allclose(other.u_h.coefficients, square_solution.u_h.coefficients, atol=1e-8)


def test_lshape_eigenvalue_is_near_reference():
    solution = solve_eigenpair(assemble(refine_uniform(make_lshape(1)), 2))
    assert solution.lambda_h == pytest.approx(LSHAPE_REFERENCE_EIGENVALUE, rel=5e-2)


def test_saddle_point_solver_satisfies_both_equations():
    system = assemble(make_unit_square(2), 1)
    solver = SaddlePointSolver(system.A, system.B)
    rng = np.random.default_rng(1)
    f = rng.standard_normal(system.sigma_dofs.n_dofs)
    g = rng.standard_normal(system.u_dofs.n_dofs)
    s, w = solver.solve(f, g)
    np.testing.assert_allclose(system.A @ s + system.B.T @ w, f, atol=1e-10)
    np.testing.assert_allclose(system.B @ s, g, atol=1e-10)


def test_source_problem_reuses_factorization(square_solution):
    system = square_solution.system
    load = system.M @ square_solution.u_h.coefficients
    s, w = solve_source(square_solution, square_solution.lambda_h * load)
    np.testing.assert_allclose(s, square_solution.sigma_h.coefficients, atol=1e-9)
    np.testing.assert_allclose(w, square_solution.u_h.coefficients, atol=1e-9)


def test_align_sign_flips_both_fields(square_solution):
    unchanged = align_sign(square_solution, 0.3)
    assert unchanged is square_solution
    flipped = align_sign(square_solution, -0.3)
    np.testing.assert_array_equal(flipped.u_h.coefficients, -square_solution.u_h.coefficients)
    np.testing.assert_array_equal(flipped.sigma_h.coefficients, -square_solution.sigma_h.coefficients)
    assert flipped.lambda_h == square_solution.lambda_h


@pytest.mark.parametrize("max_iter", [0, 1])
def test_iteration_limit(max_iter):
    system = assemble(make_unit_square(2), 1)
    with pytest.raises(SolverError):
        solve_eigenpair(system, max_iter=max_iter)


def test_invalid_tolerance_and_start():
    system = assemble(make_unit_square(1), 1)
    with pytest.raises(SolverError):
        solve_eigenpair(system, tol=0.0)
    solver = SaddlePointSolver(system.A, system.B)
    with pytest.raises(SolverError):
        inverse_power_iteration(solver, system.M, np.zeros(system.u_dofs.n_dofs), mean_weights(system))


def test_initial_iterate_has_unit_constant_modes():
    system = assemble(make_unit_square(2), 2)
    u = initial_iterate(system)
    area = mean_weights(system) @ u
    assert area == pytest.approx(1.0)


def test_iterations_logged_at_debug(caplog):
    with caplog.at_level(logging.DEBUG, logger="mixedeig"):
        solution = solve_eigenpair(assemble(make_unit_square(2), 1))
    records = [record for record in caplog.records if record.name == "mixedeig.eigensolve"]
    debug = [record for record in records if record.levelno == logging.DEBUG]
    assert len(debug) == solution.iterations
    assert any(record.levelno == logging.INFO for record in records)
