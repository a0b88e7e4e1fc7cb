import numpy as np
import pytest

from mixedeig.exceptions import BasisError
from mixedeig.femcore import (
    SpaceKind,
    make_bdm_space,
    make_bubble_space,
    make_reduced_space,
    make_scalar_space,
    piola_divergence,
    piola_map,
    project,
    scaled_condition,
)
from mixedeig.mesh import make_unit_square
from mixedeig.polynomials import dim_poly, dubiner, edge_normal, edge_points, lagrange_nodes
from mixedeig.quadrature import line_quadrature, quadrature


@pytest.mark.parametrize("k", [1, 2, 3])
def test_bdm_space_dimension_and_duality(k):
    space = make_bdm_space(k)
    assert space.kind is SpaceKind.HDIV_BDM
    assert space.dim == (k + 2) * (k + 3)
    assert space.edge_dofs == k + 2
    assert space.interior_dofs == space.dim - 3 * (k + 2)
    np.testing.assert_allclose(space.vandermonde(), np.eye(space.dim), atol=1e-11)


@pytest.mark.parametrize("k,dimension", [(1, 24), (2, 36), (3, 50)])
def test_reduced_space_dimension(k, dimension):
    space = make_reduced_space(k)
    assert space.dim == dimension
    assert space.dim == 3 * (k + 2) + (dim_poly(k + 2) - 1) + dim_poly(k + 1)
    np.testing.assert_allclose(space.vandermonde(), np.eye(space.dim), atol=1e-10)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_reduced_space_normal_traces_have_degree_k_plus_1(k):
    space = make_reduced_space(k)
    np.testing.assert_allclose(space.constraints @ space.coeffs, 0.0, atol=1e-12)
    # normal trace on each edge is reproduced by its first k+2 Legendre moments
    t, w = line_quadrature(2 * (k + 3))
    for edge in range(3):
        trace = space.values(edge_points(edge, t)) @ edge_normal(edge)
        legendre = np.polynomial.legendre.legvander(2 * t - 1, k + 3).T
        moments = (legendre * w) @ trace
        np.testing.assert_allclose(moments[k + 2:], 0.0, atol=1e-11)


@pytest.mark.parametrize("degree", [2, 3, 4, 6])
def test_bubbles_are_divergence_free_with_zero_normal_trace(degree):
    bubbles = make_bubble_space(degree)
    assert bubbles.dim == dim_poly(degree - 2)
    rule = quadrature(2 * degree)
    np.testing.assert_allclose(bubbles.divergences(rule.xy), 0.0, atol=1e-12)
    t, _ = line_quadrature(degree)
    for edge in range(3):
        normal_trace = bubbles.values(edge_points(edge, t)) @ edge_normal(edge)
        np.testing.assert_allclose(normal_trace, 0.0, atol=1e-12)
    q = bubbles.orthonormal
    np.testing.assert_allclose(q.T @ q, np.eye(bubbles.dim), atol=1e-12)


def test_lagrange_space_is_nodal():
    space = make_scalar_space(3, modal=False)
    assert space.kind is SpaceKind.LAGRANGE
    np.testing.assert_allclose(space.values(lagrange_nodes(3)), np.eye(dim_poly(3)), atol=1e-12)
    assert (space.vertex_dofs, space.edge_dofs, space.interior_dofs) == (1, 2, 1)


def test_scalar_gradient_of_lagrange_basis_sums_to_zero():
    space = make_scalar_space(2, modal=False)
    xy = np.array([[0.2, 0.3], [0.5, 0.1]])
    np.testing.assert_allclose(space.gradients(xy).sum(axis=1), 0.0, atol=1e-12)


@pytest.mark.parametrize("k", [0, 5])
def test_unsupported_orders_raise(k):
    with pytest.raises(BasisError):
        make_bdm_space(k)


def test_unsupported_scalar_degree_raises():
    with pytest.raises(BasisError):
        make_scalar_space(9)
    with pytest.raises(BasisError):
        make_scalar_space(0, modal=False)


def test_vector_spaces_have_no_gradient():
    with pytest.raises(BasisError):
        make_bdm_space(1).gradients(np.array([[0.2, 0.2]]))
    with pytest.raises(BasisError):
        make_scalar_space(1).divergences(np.array([[0.2, 0.2]]))


def test_piola_map_preserves_normal_flux_and_divergence():
    jacobian = np.array([[2.0, 0.5], [-0.3, 1.2]])
    det = np.linalg.det(jacobian)
    space = make_bdm_space(1)
    t, w = line_quadrature(6)
    origin = np.zeros(2)
    vertices = np.array([origin, jacobian[:, 0], jacobian[:, 1]])
    for edge in range(3):
        reference = space.values(edge_points(edge, t))
        physical = piola_map(jacobian, det, reference)
        tangent = vertices[(edge + 2) % 3] - vertices[(edge + 1) % 3]
        scaled_normal = np.array([tangent[1], -tangent[0]])
        np.testing.assert_allclose(
            w @ (physical @ scaled_normal), w @ (reference @ edge_normal(edge)), atol=1e-12
        )
    reference_div = space.divergences(np.array([[0.25, 0.25]]))
    np.testing.assert_allclose(piola_divergence(det, reference_div), reference_div / det)


def test_piola_map_rejects_degenerate_jacobian():
    with pytest.raises(BasisError):
        piola_map(np.array([[1.0, 2.0], [2.0, 4.0]]), 0.0, np.ones((3, 2)))


def test_project_reproduces_polynomials():
    mesh = make_unit_square(2)

    def f(x, y):
        return 1.0 + x * x - 3.0 * x * y

    coeffs = project(2, f, mesh)
    xy = np.array([[0.2, 0.3], [0.6, 0.1]])
    points = mesh.map_points(xy)
    values = coeffs @ dubiner(2, xy[:, 0], xy[:, 1])
    np.testing.assert_allclose(values, f(points[..., 0], points[..., 1]), atol=1e-13)


def test_scaled_condition():
    assert scaled_condition(np.diag([1.0, 1e-6])) == pytest.approx(1.0)
    assert scaled_condition(np.array([[1.0, 1.0], [1.0, 1.0]])) > 1e15
    assert scaled_condition(np.array([[1.0, 0.0], [0.0, 0.0]])) == float("inf")


def test_piola_map_accepts_strongly_graded_elements():
    jacobians = np.array([[[1.0, 0.0], [0.0, 1.0]], [[1e-7, 0.0], [0.0, 1e-7]]])
    det = np.linalg.det(jacobians)
    vectors = np.ones((2, 3, 2))
    mapped = piola_map(jacobians, det, vectors)
    np.testing.assert_allclose(mapped[0], 1.0)
    np.testing.assert_allclose(mapped[1], 1e7)
    degenerate = jacobians.copy()
    degenerate[1] = [[1e-7, 2e-7], [2e-7, 4e-7]]
    with pytest.raises(BasisError):
        piola_map(degenerate, np.array([1.0, 0.0]), vectors)
