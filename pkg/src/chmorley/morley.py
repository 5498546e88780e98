"""Morley element: shape functions, interpolation and field evaluation.

Global DOF layout is ``[vertex values (V), edge-midpoint normal derivatives (E)]``.
Edge DOFs are taken against the global edge normal of :class:`Mesh`.

Shape functions are built per element by inverting the 6x6 DOF matrix of the
monomials ``1, xi, eta, xi^2, xi*eta, eta^2`` in the scaled local coordinates
``(x - centroid) / diameter``.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh
from .quadrature import gauss_legendre_01, triangle_rule

# second derivatives of the monomials in (xi, eta): rows xx, xy, yy
_MONO_HESS = np.array(
    [
        [0, 0, 0, 2, 0, 0],
        [0, 0, 0, 0, 1, 0],
        [0, 0, 0, 0, 0, 2],
    ],
    dtype=float,
)


class DegenerateElementError(ValueError):
    pass


def monomials(xi, eta):
    """Monomial values, shape ``xi.shape + (6,)``."""
    one = np.ones_like(xi)
    return np.stack([one, xi, eta, xi * xi, xi * eta, eta * eta], axis=-1)


def monomial_gradients(xi, eta):
    """Monomial gradients, shape ``xi.shape + (6, 2)``."""
    zero, one = np.zeros_like(xi), np.ones_like(xi)
    dxi = np.stack([zero, one, zero, 2 * xi, eta, zero], axis=-1)
    deta = np.stack([zero, zero, one, zero, xi, 2 * eta], axis=-1)
    return np.stack([dxi, deta], axis=-1)


def _dof_matrices(p):
    """Batched DOF matrices for triangles ``p`` (T, 3, 2) with outward normals.

    Returns ``D`` (T, 6, 6), centroids (T, 2), scales (T,).
    """
    c = p.mean(axis=1)
    loc = np.array([[1, 2], [2, 0], [0, 1]])
    lengths = np.linalg.norm(p[:, loc[:, 1]] - p[:, loc[:, 0]], axis=2)
    s = lengths.max(axis=1)
    xi = (p - c[:, None, :]) / s[:, None, None]

    D = np.empty((len(p), 6, 6))
    D[:, :3, :] = monomials(xi[..., 0], xi[..., 1])
    a, b = xi[:, loc[:, 0]], xi[:, loc[:, 1]]
    mid = 0.5 * (a + b)
    t = b - a
    nrm = np.stack([t[..., 1], -t[..., 0]], axis=-1)
    nrm /= np.linalg.norm(nrm, axis=-1)[..., None]
    G = monomial_gradients(mid[..., 0], mid[..., 1])  # (T, 3, 6, 2)
    D[:, 3:, :] = np.einsum("tekd,ted->tek", G, nrm) / s[:, None, None]
    return D, c, s


@dataclass(frozen=True)
class LocalBasis:
    """The six Morley shape functions of one triangle.

    DOF order is vertex values 0, 1, 2 then outward normal derivatives at the
    midpoints of edges 0, 1, 2 (edge ``i`` is opposite vertex ``i``).
    ``coeffs[:, j]`` holds the monomial coefficients of shape function ``j``.
    """

    vertices: np.ndarray
    coeffs: np.ndarray
    center: np.ndarray
    scale: float

    def _local(self, points):
        q = (np.atleast_2d(points) - self.center) / self.scale
        return q[:, 0], q[:, 1]

    def values(self, points):
        return monomials(*self._local(points)) @ self.coeffs

    def gradients(self, points):
        G = monomial_gradients(*self._local(points))
        return np.einsum("pkd,kj->pjd", G, self.coeffs) / self.scale

    def hessians(self):
        """Constant Hessians as (6, 3) array of ``(xx, xy, yy)``."""
        return (_MONO_HESS @ self.coeffs).T / self.scale**2


def local_basis(vertices) -> LocalBasis:
    p = np.asarray(vertices, dtype=float).reshape(1, 3, 2)
    d1, d2 = p[0, 1] - p[0, 0], p[0, 2] - p[0, 0]
    area2 = d1[0] * d2[1] - d1[1] * d2[0]
    diam = max(np.linalg.norm(d1), np.linalg.norm(d2), np.linalg.norm(p[0, 2] - p[0, 1]))
    if not diam > 0 or abs(area2) <= 1e-14 * diam * diam:
        raise DegenerateElementError("degenerate triangle")
    if area2 < 0:
        raise DegenerateElementError("vertices must be counterclockwise")
    D, c, s = _dof_matrices(p)
    return LocalBasis(p[0], np.linalg.inv(D[0]), c[0], float(s[0]))


@dataclass
class ElementBasis:
    """Basis data for all elements of a mesh, with global edge signs applied."""

    coeffs: np.ndarray  # (T, 6, 6)
    centers: np.ndarray  # (T, 2)
    scales: np.ndarray  # (T,)
    dofs: np.ndarray  # (T, 6) global DOF indices
    hessians: np.ndarray  # (T, 6, 3) constant (xx, xy, yy) of each shape function
    areas: np.ndarray  # (T,)
    corners: np.ndarray  # (T, 3, 2)
    _tables: dict = field(default_factory=dict, repr=False)

    def local_coords(self, points, elements=None):
        """Scaled local coordinates of physical points; ``points`` (T, q, 2) or (N, 2)."""
        if elements is None:
            return (points - self.centers[:, None, :]) / self.scales[:, None, None]
        return (points - self.centers[elements]) / self.scales[elements, None]

    def physical_points(self, rule):
        return np.einsum("qi,tid->tqd", rule.points, self.corners)

    def tabulate(self, rule):
        """Shape values (T, q, 6) and gradients (T, q, 6, 2) at a reference rule."""
        key = (rule.degree, len(rule))
        if key not in self._tables:
            xi = self.local_coords(self.physical_points(rule))
            m = monomials(xi[..., 0], xi[..., 1])
            g = monomial_gradients(xi[..., 0], xi[..., 1])
            vals = np.einsum("tqk,tkj->tqj", m, self.coeffs)
            grads = np.einsum("tqkd,tkj->tqjd", g, self.coeffs)
            grads /= self.scales[:, None, None, None]
            self._tables[key] = (vals, grads)
        return self._tables[key]


_BASIS_CACHE: "weakref.WeakKeyDictionary[Mesh, ElementBasis]" = weakref.WeakKeyDictionary()


def element_basis(mesh: Mesh) -> ElementBasis:
    eb = _BASIS_CACHE.get(mesh)
    if eb is None:
        p = mesh.vertices[mesh.elements]
        D, c, s = _dof_matrices(p)
        C = np.linalg.inv(D)
        C[:, :, 3:] *= mesh.element_edge_signs[:, None, :]
        dofs = np.concatenate([mesh.elements, mesh.n_vertices + mesh.element_edges], axis=1)
        H = np.einsum("rk,tkj->tjr", _MONO_HESS, C) / (s**2)[:, None, None]
        eb = ElementBasis(C, c, s, dofs, H, mesh.areas(), p)
        _BASIS_CACHE[mesh] = eb
    return eb


class MorleyFunction:
    """A Morley field: a coefficient vector of length ``V + E`` on a mesh."""

    __slots__ = ("mesh", "coefficients", "_poly")

    def __init__(self, mesh: Mesh, coefficients):
        coefficients = np.array(coefficients, dtype=float)
        if coefficients.shape != (mesh.n_dofs,):
            raise ValueError(
                f"expected {mesh.n_dofs} coefficients, got shape {coefficients.shape}"
            )
        coefficients.setflags(write=False)
        self.mesh = mesh
        self.coefficients = coefficients
        self._poly = None

    def __repr__(self):
        return f"MorleyFunction(n_dofs={self.mesh.n_dofs})"

    @property
    def vertex_values(self):
        return self.coefficients[: self.mesh.n_vertices]

    @property
    def edge_values(self):
        return self.coefficients[self.mesh.n_vertices :]

    def _combine(self, other, op):
        if isinstance(other, MorleyFunction):
            if other.mesh is not self.mesh:
                raise ValueError("fields live on different meshes")
            other = other.coefficients
        return MorleyFunction(self.mesh, op(self.coefficients, other))

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, scalar):
        return MorleyFunction(self.mesh, self.coefficients * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return MorleyFunction(self.mesh, -self.coefficients)

    def polynomials(self):
        """Local monomial coefficients per element, (T, 6)."""
        if self._poly is None:
            eb = element_basis(self.mesh)
            self._poly = np.einsum("tkj,tj->tk", eb.coeffs, self.coefficients[eb.dofs])
        return self._poly

    def evaluate_many(self, elements, points):
        """Value (N,), gradient (N, 2) and Hessian (N, 2, 2) at points of given elements."""
        eb = element_basis(self.mesh)
        elements = np.asarray(elements)
        xi = eb.local_coords(np.asarray(points, dtype=float), elements)
        P = self.polynomials()[elements]
        val = np.einsum("nk,nk->n", monomials(xi[:, 0], xi[:, 1]), P)
        s = eb.scales[elements]
        grad = np.einsum("nkd,nk->nd", monomial_gradients(xi[:, 0], xi[:, 1]), P) / s[:, None]
        h = (P @ _MONO_HESS.T) / (s**2)[:, None]
        hess = np.stack([h[:, [0, 1]], h[:, [1, 2]]], axis=1)
        return val, grad, hess

    def values_at(self, elements, points):
        eb = element_basis(self.mesh)
        xi = eb.local_coords(np.asarray(points, dtype=float), np.asarray(elements))
        return np.einsum("nk,nk->n", monomials(xi[:, 0], xi[:, 1]), self.polynomials()[elements])

    def hessians(self):
        """Elementwise constant Hessians as (T, 3) array ``(xx, xy, yy)``."""
        eb = element_basis(self.mesh)
        return (self.polynomials() @ _MONO_HESS.T) / (eb.scales**2)[:, None]

    def at_rule(self, rule):
        """Values (T, q) and gradients (T, q, 2) at the points of a reference rule."""
        eb = element_basis(self.mesh)
        vals, grads = eb.tabulate(rule)
        c = self.coefficients[eb.dofs]
        return np.einsum("tqj,tj->tq", vals, c), np.einsum("tqjd,tj->tqd", grads, c)


def evaluate(u: MorleyFunction, element: int, p):
    """Value, gradient (2,) and Hessian (2, 2) of ``u`` at point ``p`` in ``element``."""
    if not 0 <= element < u.mesh.n_elements:
        raise IndexError(f"element {element} out of range")
    v, g, H = u.evaluate_many(np.array([element]), np.asarray(p, dtype=float)[None, :])
    return float(v[0]), g[0], H[0]


def _field_parts(v):
    if hasattr(v, "value") and hasattr(v, "gradient"):
        return v.value, v.gradient
    value, gradient = v
    return value, gradient


def interpolate(mesh: Mesh, v) -> MorleyFunction:
    """Morley interpolant: vertex values and edge-averaged normal derivatives.

    ``v`` is a :class:`~chmorley.fields.ScalarField` or a ``(value, gradient)``
    pair of vectorized callables. Edge averages use 3-point Gauss quadrature.
    """
    value, gradient = _field_parts(v)
    V = mesh.vertices
    vals = np.broadcast_to(value(V[:, 0], V[:, 1]), (mesh.n_vertices,))
    s, w = gauss_legendre_01(3)
    a = V[mesh.edges[:, 0]]
    b = V[mesh.edges[:, 1]]
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    gx, gy = gradient(pts[..., 0], pts[..., 1])
    n = mesh.edge_normals()
    dn = (np.broadcast_to(gx, pts.shape[:2]) * n[:, 0, None]
          + np.broadcast_to(gy, pts.shape[:2]) * n[:, 1, None]) @ w
    return MorleyFunction(mesh, np.concatenate([vals, dn]))


def project_boundary(u: MorleyFunction) -> MorleyFunction:
    """Zero the boundary-edge normal-derivative DOFs (membership in the Neumann subspace)."""
    c = u.coefficients.copy()
    c[u.mesh.n_vertices + np.flatnonzero(u.mesh.boundary_edge_flags)] = 0.0
    return MorleyFunction(u.mesh, c)


def free_dofs(mesh: Mesh) -> np.ndarray:
    """DOF indices of the Neumann subspace (boundary-edge DOFs removed)."""
    keep = np.ones(mesh.n_dofs, dtype=bool)
    keep[mesh.n_vertices + np.flatnonzero(mesh.boundary_edge_flags)] = False
    return np.flatnonzero(keep)


def mean_value(u: MorleyFunction) -> float:
    eb = element_basis(u.mesh)
    rule = triangle_rule(2)
    vals, _ = u.at_rule(rule)
    return float((eb.areas * (vals @ rule.weights)).sum() / eb.areas.sum())


def is_mean_zero(u: MorleyFunction, tol=1e-12) -> bool:
    return abs(mean_value(u)) <= tol


def in_neumann_space(u: MorleyFunction) -> bool:
    return not np.any(u.edge_values[u.mesh.boundary_edge_flags])
