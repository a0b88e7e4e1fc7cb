import math

import numpy as np
import pytest

from mixedeig.exceptions import ConfigurationError
from mixedeig.verification import (
    CheckResult,
    bubble_checks,
    format_report,
    micro_mesh,
    monomial_gram,
    monomial_integral,
    random_elements,
    run_invariant_suite,
    unisolvence_checks,
)


@pytest.mark.parametrize("domain", ["square", "lshape"])
@pytest.mark.parametrize("k", [1, 2])
def test_invariant_suite_passes(k, domain):
    results = run_invariant_suite(k, domain)
    failed = [str(result) for result in results if not result.passed]
    assert not failed, "\n".join(failed)


def test_exact_solution_checks_only_on_square():
    square = {result.name for result in run_invariant_suite(1, "square")}
    lshape = {result.name for result in run_invariant_suite(1, "lshape")}
    assert "guaranteed bound identity" in square
    assert "guaranteed bound identity" not in lshape
    assert lshape < square


def test_third_order_spaces():
    results = unisolvence_checks(3) + bubble_checks(3)
    assert all(result.passed for result in results), format_report(results)


def test_check_result_rejects_non_finite_values():
    assert CheckResult("ok", 1e-12, 1e-10).passed
    assert not CheckResult("too large", 1e-8, 1e-10).passed
    assert not CheckResult("nan", math.nan, 1e-10).passed
    assert not CheckResult("inf", math.inf, 1e-10).passed
    assert str(CheckResult("nan", math.nan, 1e-10)).startswith("FAIL")


def test_format_report_summary():
    results = [CheckResult("a", 0.0, 1.0), CheckResult("b", 2.0, 1.0)]
    lines = format_report(results).splitlines()
    assert lines[0].startswith("PASS")
    assert lines[1].startswith("FAIL")
    assert lines[-1] == "1/2 checks passed"


def test_random_elements_are_reproducible_and_shape_regular():
    first = random_elements(5, seed=3)
    second = random_elements(5, seed=3)
    assert len(first) == 5
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.vertices, b.vertices)
        assert a.determinants[0] > 0
        assert a.min_angles()[0] >= 0.35


def test_micro_mesh():
    assert micro_mesh("square").n_triangles == 8
    assert micro_mesh("lshape").n_triangles == 24
    with pytest.raises(ConfigurationError):
        micro_mesh("disk")


def test_monomial_integrals_on_reference_triangle():
    assert monomial_integral(0, 0) == pytest.approx(0.5)
    assert monomial_integral(1, 0) == pytest.approx(1 / 6)
    assert monomial_integral(1, 1) == pytest.approx(1 / 24)
    assert monomial_integral(2, 0) == pytest.approx(1 / 12)
    assert monomial_integral(3, 2) == monomial_integral(2, 3)
    np.testing.assert_allclose(
        monomial_gram(1), [[1 / 2, 1 / 6, 1 / 6], [1 / 6, 1 / 12, 1 / 24], [1 / 6, 1 / 24, 1 / 12]], rtol=1e-14
    )
    assert np.all(np.linalg.eigvalsh(monomial_gram(3)) > 0)
