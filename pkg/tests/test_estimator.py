from dataclasses import replace

import numpy as np
import pytest

from mixedeig.assembly import FEFunction, norm_L2
from mixedeig.constants import LSHAPE_REFERENCE_EIGENVALUE, SQUARE_EIGENVALUE
from mixedeig.estimator import (
    EstimatorReport,
    bound_identity_residual,
    cross_term_by_parts,
    estimate,
    flux_defect,
    guaranteed_bound_check,
    lshape_reference,
    unit_square_solution,
)
from mixedeig.exceptions import EstimatorError
from mixedeig.experiments import solve_level
from mixedeig.mesh import make_lshape, make_unit_square, refine_uniform


@pytest.fixture(scope="module")
def square_k1():
    return solve_level(make_unit_square(4), 1, unit_square_solution())


@pytest.fixture(scope="module")
def square_k2():
    return solve_level(make_unit_square(4), 2, unit_square_solution())


def test_eta_is_root_of_summed_indicators(square_k1):
    report = square_k1.report
    assert report.eta_K.shape == (32,)
    assert np.all(report.eta_K >= 0)
    assert report.eta == pytest.approx(np.sqrt(np.sum(report.eta_K**2)), rel=1e-14)


def test_eta_lambda_combines_its_parts(square_k1):
    report = square_k1.report
    assert report.eta_lambda == pytest.approx(
        report.eta**2 + report.flux_defect**2 + report.lambda_defect, rel=1e-14
    )
    assert report.lambda_defect >= 0
    assert report.flux_defect > 0


def test_error_identity_behind_the_bound(square_k1):
    report = square_k1.report
    assert bound_identity_residual(report) < 1e-9
    assert guaranteed_bound_check(report)
    assert report.hot_remainder == pytest.approx(2 * abs(report.cross_term))
    assert report.hot == pytest.approx(np.sqrt(abs(report.cross_term)))


@pytest.mark.parametrize("fixture", ["square_k1", "square_k2"])
def test_efficiency_and_reliability(fixture, request):
    report = request.getfixturevalue(fixture).report
    assert report.eta <= report.err_grad_u2 + report.err_sigma_star + 1e-10
    assert report.err_grad_u2**2 + report.err_sigma_star**2 <= report.eta**2 + report.hot_remainder + 1e-10
    assert report.eta_lambda >= report.eta**2


def test_error_identity_survives_perturbed_flux(square_k1):
    sigma_star = square_k1.post.sigma_star
    noise = np.random.default_rng(7).standard_normal(sigma_star.coefficients.size)
    perturbed = FEFunction(sigma_star.mesh, sigma_star.dofmap, sigma_star.coefficients + 1e-2 * noise)
    post = replace(square_k1.post, sigma_star=perturbed)
    report = estimate(square_k1.mesh, post, square_k1.solution, unit_square_solution())
    assert report.eta != square_k1.report.eta
    assert bound_identity_residual(report) < 1e-9


def test_cross_term_integrated_by_parts(square_k1):
    report = square_k1.report
    by_parts = cross_term_by_parts(square_k1.mesh, square_k1.post, unit_square_solution())
    assert by_parts == pytest.approx(report.cross_term, rel=1e-8, abs=1e-12)


def test_eigenvalue_error_identity(square_k1):
    report = square_k1.report
    lam_h = square_k1.solution.lambda_h
    identity = report.err_sigma_h**2 - lam_h * report.err_u_h**2
    assert SQUARE_EIGENVALUE - lam_h == pytest.approx(identity, rel=1e-6, abs=1e-10)


@pytest.mark.parametrize(
    "field,expected",
    [
        ("err_grad_u2", 0.0307),
        ("err_sigma_star", 0.0250),
        ("eta", 0.0374),
        ("hot", 0.00789),
        ("eff", 0.889),
        ("err_u2_L2", 0.00148),
        ("err_lambda_star", 4.52e-4),
        ("eta_lambda", 0.00239),
    ],
)
def test_first_order_values_on_32_triangles(square_k1, field, expected):
    assert getattr(square_k1.report, field) == pytest.approx(expected, rel=0.25)


@pytest.mark.parametrize("field,expected", [("eta", 0.00292), ("eff", 0.943)])
def test_second_order_values_on_32_triangles(square_k2, field, expected):
    assert getattr(square_k2.report, field) == pytest.approx(expected, rel=0.25)


def test_estimate_without_exact_solution(square_k1):
    report = estimate(square_k1.mesh, square_k1.post, square_k1.solution)
    assert report.eta == square_k1.report.eta
    assert report.err_lambda is None
    assert report.eff is None
    with pytest.raises(EstimatorError):
        bound_identity_residual(report)


def test_estimate_with_reference_eigenvalue_only():
    level = solve_level(refine_uniform(make_lshape(1)), 2, lshape_reference())
    report = level.report
    assert report.err_lambda == pytest.approx(abs(LSHAPE_REFERENCE_EIGENVALUE - level.solution.lambda_h))
    assert report.err_lambda_star is not None
    assert report.eff_lambda == pytest.approx(report.eta_lambda / report.err_lambda_star)
    assert report.err_grad_u2 is None
    with pytest.raises(EstimatorError):
        guaranteed_bound_check(report)


def test_flux_defect_of_identical_fields_is_zero(square_k1):
    sigma_star = square_k1.post.sigma_star
    assert flux_defect(square_k1.mesh, sigma_star, sigma_star) == 0.0


def test_report_defaults():
    report = EstimatorReport(eta_K=np.zeros(1), eta=0.0, eta_lambda=0.0, flux_defect=0.0, lambda_defect=0.0)
    assert report.hot is None and report.cross_term is None


def test_exact_square_eigenfunction():
    exact = unit_square_solution()
    assert exact.has_field
    assert not lshape_reference().has_field
    assert norm_L2(exact.u, make_unit_square(4)) == pytest.approx(1.0, rel=1e-10)
    x, y, h = 0.3, 0.7, 1e-6
    gradient = exact.sigma(np.array(x), np.array(y))
    fd = [
        (exact.u(x + h, y) - exact.u(x - h, y)) / (2 * h),
        (exact.u(x, y + h) - exact.u(x, y - h)) / (2 * h),
    ]
    np.testing.assert_allclose(gradient, fd, rtol=1e-7)
