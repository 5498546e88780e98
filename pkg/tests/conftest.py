import numpy as np
import pytest

from chmorley.mesh import build_uniform_mesh


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def mesh4():
    return build_uniform_mesh(4)


def random_quadratic(rng):
    """Coefficients of a + b x + c y + d x^2 + e xy + f y^2 and a field for them."""
    from chmorley.fields import ScalarField

    a, b, c, d, e, f = rng.uniform(-2, 2, 6)
    return (a, b, c, d, e, f), ScalarField(
        value=lambda x, y: a + b * x + c * y + d * x * x + e * x * y + f * y * y,
        gradient=lambda x, y: (b + 2 * d * x + e * y, c + e * x + 2 * f * y),
        hessian=lambda x, y: (
            np.full(np.shape(x), 2 * d),
            np.full(np.shape(x), e),
            np.full(np.shape(x), 2 * f),
        ),
    )


def random_points_in_elements(mesh, rng, m):
    """``m`` random points with their containing elements."""
    el = rng.integers(0, mesh.n_elements, m)
    lam = rng.dirichlet(np.ones(3), m)
    pts = np.einsum("ni,nid->nd", lam, mesh.vertices[mesh.elements[el]])
    return el, pts


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
