import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chmorley.fields import ScalarField, constant_field, ellipse_field
from chmorley.mesh import Mesh, build_uniform_mesh
from chmorley.morley import (
    DegenerateElementError,
    MorleyFunction,
    evaluate,
    free_dofs,
    in_neumann_space,
    interpolate,
    is_mean_zero,
    local_basis,
    mean_value,
    project_boundary,
)
from chmorley.norms import error_vs_function
from conftest import random_points_in_elements, random_quadratic

UNIT = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def dof_functionals(vertices, funcs):
    """Apply the six Morley DOFs to callables returning (value, gradient)."""
    out = []
    for i in range(3):
        out.append([f(vertices[i])[0] for f in funcs])
    for i in range(3):
        a, b = vertices[(i + 1) % 3], vertices[(i + 2) % 3]
        t = b - a
        n = np.array([t[1], -t[0]]) / np.linalg.norm(t)
        out.append([np.dot(f(0.5 * (a + b))[1], n) for f in funcs])
    return np.array(out)


def oracle_basis(vertices):
    """Shape functions from a Vandermonde solve in raw physical monomials."""
    mono = lambda p: np.array([1, p[0], p[1], p[0] ** 2, p[0] * p[1], p[1] ** 2])
    dmono = lambda p: np.array([[0, 0], [1, 0], [0, 1], [2 * p[0], 0], [p[1], p[0]], [0, 2 * p[1]]])
    funcs = [lambda p, k=k: (mono(p)[k], dmono(p)[k]) for k in range(6)]
    D = dof_functionals(vertices, funcs)
    return np.linalg.solve(D, np.eye(6))  # column j = coefficients of phi_j


def random_triangle(rng):
    while True:
        v = rng.uniform(-1, 1, (3, 2))
        d1, d2 = v[1] - v[0], v[2] - v[0]
        area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
        if area < 0:
            v = v[[0, 2, 1]]
            area = -area
        diam = max(np.linalg.norm(v[i] - v[j]) for i, j in [(0, 1), (1, 2), (0, 2)])
        if area > 0.05 * diam**2:
            return v


def test_kronecker_unit_triangle():
    lb = local_basis(UNIT)
    assert np.allclose(lb.values(UNIT), np.eye(3, 6), atol=1e-14)
    funcs = [lambda p, j=j: (lb.values(p)[0, j], lb.gradients(p)[0, j]) for j in range(6)]
    assert np.allclose(dof_functionals(UNIT, funcs), np.eye(6), atol=1e-12)


def test_basis_matches_vandermonde_oracle(rng):
    for _ in range(20):
        v = random_triangle(rng)
        lb = local_basis(v)
        C = oracle_basis(v)
        pts = rng.dirichlet(np.ones(3), 10) @ v
        mono = np.column_stack([np.ones(10), pts[:, 0], pts[:, 1], pts[:, 0] ** 2,
                                pts[:, 0] * pts[:, 1], pts[:, 1] ** 2])
        assert np.allclose(lb.values(pts), mono @ C, atol=1e-11)


def test_hessian_constant_vs_finite_differences(rng):
    for _ in range(5):
        v = random_triangle(rng)
        lb = local_basis(v)
        H = lb.hessians()
        h = 1e-3
        for p in rng.dirichlet(np.ones(3), 20) @ v:
            f = lambda q: lb.values(q)[0]
            ex, ey = np.array([h, 0]), np.array([0, h])
            fxx = (f(p + ex) - 2 * f(p) + f(p - ex)) / h**2
            fyy = (f(p + ey) - 2 * f(p) + f(p - ey)) / h**2
            fxy = (f(p + ex + ey) - f(p + ex - ey) - f(p - ex + ey) + f(p - ex - ey)) / (4 * h * h)
            fd = np.column_stack([fxx, fxy, fyy])
            assert np.allclose(fd, H, rtol=1e-5, atol=1e-5 * np.abs(H).max())


def test_degenerate_and_clockwise_rejected():
    with pytest.raises(DegenerateElementError):
        local_basis([[0, 0], [1, 0], [2, 0]])
    with pytest.raises(DegenerateElementError):
        local_basis(UNIT[[0, 2, 1]])


def test_constant_and_linear_fields(rng):
    m = build_uniform_mesh(5)
    u = interpolate(m, constant_field(1.7))
    assert np.all(u.edge_values == 0)
    el, pts = random_points_in_elements(m, rng, 50)
    val, grad, hess = u.evaluate_many(el, pts)
    assert np.allclose(val, 1.7) and np.allclose(grad, 0, atol=1e-13)
    assert np.allclose(hess, 0, atol=1e-12)

    lin = ScalarField.from_expression("0.5 + 2*x - 3*y")
    u = interpolate(m, lin)
    val, grad, hess = u.evaluate_many(el, pts)
    assert np.allclose(val, lin(pts[:, 0], pts[:, 1]), atol=1e-13)
    assert np.allclose(grad, [2, -3], atol=1e-12)
    assert np.allclose(hess, 0, atol=1e-11)


def test_x_squared_hessian_single_point():
    m = build_uniform_mesh(3)
    u = interpolate(m, ScalarField.from_expression("x**2"))
    for t in (0, 7):
        val, grad, H = evaluate(u, t, m.centroids()[t])
        assert np.allclose(H, [[2, 0], [0, 0]], atol=1e-11)
    with pytest.raises(IndexError):
        evaluate(u, m.n_elements, [0, 0])


def test_quadratic_reproduction_fixed():
    m = build_uniform_mesh(6)
    v = ScalarField.from_expression("3 - 2*x + y + x**2 - x*y + 4*y**2")
    u = interpolate(m, v)
    rng = np.random.default_rng(0)
    el, pts = random_points_in_elements(m, rng, 100)
    val, grad, hess = u.evaluate_many(el, pts)
    x, y = pts.T
    assert np.allclose(val, v(x, y), atol=1e-12)
    assert np.allclose(grad, np.column_stack(v.gradient(x, y)), atol=1e-12)
    assert np.allclose(hess, [[2, -1], [-1, 8]], atol=1e-11)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**31))
def test_quadratic_reproduction_property(n, seed):
    rng = np.random.default_rng(seed)
    m = build_uniform_mesh(n)
    (a, b, c, d, e, f), v = random_quadratic(rng)
    el, pts = random_points_in_elements(m, rng, 30)
    val, grad, hess = interpolate(m, v).evaluate_many(el, pts)
    assert np.allclose(val, v(*pts.T), atol=1e-11)
    assert np.allclose(hess, [[2 * d, e], [e, 2 * f]], atol=1e-10)


def test_interpolation_orders():
    v = ScalarField.from_expression("sin(pi*x)*cos(pi*y)")
    errs = np.array([[error_vs_function(interpolate(build_uniform_mesh(n), v), v, j)
                      for j in range(3)] for n in (8, 16, 32)])
    orders = np.log2(errs[:-1] / errs[1:])
    for j in range(3):
        assert orders[-1, j] == pytest.approx(3 - j, abs=0.2)


def test_interpolate_ellipse_profile_is_finite():
    m = build_uniform_mesh(10)
    u = project_boundary(interpolate(m, ellipse_field(0.04)))
    assert np.all(np.isfinite(u.coefficients))
    assert np.isfinite(mean_value(u))
    assert in_neumann_space(u)


def test_orientation_flip_invariance():
    """Reversing stored edge directions flips edge DOFs but not the field."""
    m = build_uniform_mesh(3)
    flipped = Mesh.from_elements(m.vertices, m.elements, edges=m.edges[:, ::-1], domain=m.domain)
    v = ScalarField.from_expression("sin(x)*exp(y) + x*y**2")
    u, w = interpolate(m, v), interpolate(flipped, v)
    assert np.allclose(u.vertex_values, w.vertex_values)
    assert np.allclose(u.edge_values, -w.edge_values, atol=1e-14)
    rng = np.random.default_rng(3)
    el, pts = random_points_in_elements(m, rng, 50)
    assert np.allclose(u.values_at(el, pts), w.values_at(el, pts), atol=1e-13)


def test_project_boundary():
    m = build_uniform_mesh(3)
    rng = np.random.default_rng(1)
    u = MorleyFunction(m, rng.normal(size=m.n_dofs))
    p = project_boundary(u)
    b = m.n_vertices + np.flatnonzero(m.boundary_edge_flags)
    assert np.all(p.coefficients[b] == 0)
    keep = np.setdiff1d(np.arange(m.n_dofs), b)
    assert np.array_equal(p.coefficients[keep], u.coefficients[keep])
    assert np.array_equal(project_boundary(p).coefficients, p.coefficients)
    assert in_neumann_space(p) and not in_neumann_space(u)
    assert np.array_equal(free_dofs(m), keep)


def test_mean_value():
    m = build_uniform_mesh(4)
    assert mean_value(interpolate(m, constant_field(-0.4))) == pytest.approx(-0.4, abs=1e-14)
    assert is_mean_zero(interpolate(m, ScalarField.from_expression("x")))
    assert mean_value(interpolate(m, ScalarField.from_expression("x**2"))) == pytest.approx(1 / 3, abs=1e-12)


def test_function_arithmetic_and_immutability():
    m = build_uniform_mesh(2)
    u = MorleyFunction(m, np.arange(m.n_dofs, dtype=float))
    assert np.array_equal((2 * u - u).coefficients, u.coefficients)
    assert np.array_equal((-u + u).coefficients, np.zeros(m.n_dofs))
    with pytest.raises(ValueError):
        u.coefficients[0] = 1.0
    with pytest.raises(ValueError):
        MorleyFunction(m, np.zeros(3))
    with pytest.raises(ValueError):
        u + MorleyFunction(build_uniform_mesh(2), np.zeros(m.n_dofs))
