from math import factorial

import numpy as np
import pytest

from mixedeig.exceptions import QuadratureError
from mixedeig.quadrature import line_quadrature, quadrature


def monomial_integral(a, b):
    # integral of x^a y^b over the reference triangle
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("degree", [0, 1, 2, 3, 5, 8, 12, 20, 30])
@pytest.mark.parametrize("symmetric", [False, True])
def test_quadrature_is_exact_for_monomials(degree, symmetric):
    rule = quadrature(degree, symmetric=symmetric)
    x, y = rule.xy.T
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            approx = float(np.sum(rule.weights * x**a * y**b))
            assert approx == pytest.approx(monomial_integral(a, b), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("degree", [0, 4, 11, 30])
def test_quadrature_weights_positive_and_sum_to_area(degree):
    rule = quadrature(degree)
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(0.5, rel=1e-14)
    assert np.allclose(rule.points.sum(axis=1), 1.0)
    assert np.all(rule.points >= 0)


def test_low_degree_is_centroid_rule():
    for symmetric in (False, True):
        rule = quadrature(1, symmetric=symmetric)
        assert len(rule) == 1
        assert np.allclose(rule.xy, [[1 / 3, 1 / 3]])
        assert rule.weights[0] == pytest.approx(0.5)


def test_symmetric_rule_is_permutation_invariant():
    rule = quadrature(7, symmetric=True)
    for perm in ([1, 0, 2], [2, 1, 0], [0, 2, 1]):
        permuted = rule.points[:, perm]
        distance = np.linalg.norm(permuted[:, None, :] - rule.points[None, :, :], axis=2)
        nearest = distance.argmin(axis=1)
        assert distance.min(axis=1).max() < 1e-12
        np.testing.assert_allclose(rule.weights[nearest], rule.weights, rtol=1e-12)


def test_default_rule_is_symmetric():
    default, plain = quadrature(9), quadrature(9, symmetric=False)
    np.testing.assert_array_equal(default.points, quadrature(9, symmetric=True).points)
    assert len(default) > len(plain)
    # beyond the exact degree only the symmetric rule treats x and y alike
    x, y = default.xy.T
    assert np.sum(default.weights * x**12) == pytest.approx(np.sum(default.weights * y**12), rel=1e-13)


def test_rules_are_cached_and_read_only():
    rule = quadrature(6)
    assert quadrature(6) is rule
    with pytest.raises(ValueError):
        rule.weights[0] = 1.0


@pytest.mark.parametrize("degree", [-1, 31])
def test_quadrature_degree_out_of_range(degree):
    with pytest.raises(QuadratureError):
        quadrature(degree)


@pytest.mark.parametrize("degree", [0, 1, 4, 9, 19])
def test_line_quadrature_exact_on_unit_interval(degree):
    t, w = line_quadrature(degree)
    assert np.all((t > 0) & (t < 1))
    for j in range(degree + 1):
        assert float(np.sum(w * t**j)) == pytest.approx(1.0 / (j + 1), rel=1e-13)
