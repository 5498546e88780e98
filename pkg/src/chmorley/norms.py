"""Broken Sobolev norms, the Cahn-Hilliard energy, and error measurement."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh, MeshError
from .morley import MorleyFunction, element_basis
from .quadrature import triangle_rule


def _sum_over_elements(mesh, rule, integrand):
    areas = element_basis(mesh).areas
    return float(np.sum(areas * (integrand @ rule.weights)))


def broken_norm(u: MorleyFunction, j: int) -> float:
    """``|u|_{j,2,h}``: elementwise ``L2`` norm of the ``j``-th derivatives, j in 0, 1, 2.

    The second-order seminorm sums ``u_xx^2 + u_xy^2 + u_yy^2`` (one term per
    multi-index).
    """
    if j == 2:
        H = u.hessians()
        areas = element_basis(u.mesh).areas
        return math.sqrt(float(np.sum(areas * (H**2).sum(axis=1))))
    if j not in (0, 1):
        raise ValueError(f"derivative order must be 0, 1 or 2, got {j}")
    rule = triangle_rule(4 if j == 0 else 2)
    vals, grads = u.at_rule(rule)
    integrand = vals**2 if j == 0 else (grads**2).sum(axis=-1)
    return math.sqrt(_sum_over_elements(u.mesh, rule, integrand))


def energy(u: MorleyFunction, eps: float) -> float:
    """``int (eps/2)|grad u|^2 + F(u)/eps`` with ``F(u) = (u^2 - 1)^2 / 4``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    rule = triangle_rule(8)
    vals, grads = u.at_rule(rule)
    dens = 0.5 * eps * (grads**2).sum(axis=-1) + 0.25 * (vals**2 - 1.0) ** 2 / eps
    return _sum_over_elements(u.mesh, rule, dens)


def _derivatives_at(v, X, j):
    x, y = X[..., 0], X[..., 1]
    if j == 0:
        return np.broadcast_to(np.asarray(v.value(x, y), dtype=float), x.shape)[..., None]
    if j == 1:
        return np.stack(np.broadcast_arrays(*v.gradient(x, y)), axis=-1)
    if v.hessian is None:
        raise ValueError("second-order error needs a field with a Hessian")
    return np.stack(np.broadcast_arrays(*v.hessian(x, y)), axis=-1)


def _morley_derivatives(u, elements, X, j):
    val, grad, hess = u.evaluate_many(elements, X)
    if j == 0:
        return val[:, None]
    if j == 1:
        return grad
    return np.column_stack([hess[:, 0, 0], hess[:, 0, 1], hess[:, 1, 1]])


def error_vs_function(u: MorleyFunction, v, j: int, degree: int = 10) -> float:
    """``|u - v|_{j,2,h}`` against an analytic field, degree-10 rule per element."""
    if j not in (0, 1, 2):
        raise ValueError(f"derivative order must be 0, 1 or 2, got {j}")
    mesh = u.mesh
    eb = element_basis(mesh)
    rule = triangle_rule(degree)
    X = eb.physical_points(rule)
    T, q = X.shape[:2]
    elements = np.repeat(np.arange(T), q)
    du = _morley_derivatives(u, elements, X.reshape(-1, 2), j).reshape(T, q, -1)
    diff = du - _derivatives_at(v, X, j)
    return math.sqrt(_sum_over_elements(mesh, rule, (diff**2).sum(axis=-1)))


def nested_parents(coarse: Mesh, fine: Mesh, tol=1e-9) -> np.ndarray:
    """Coarse element containing each fine element; raises if the meshes are not nested."""
    parents, _ = coarse.locate_points(fine.centroids())
    corners = fine.vertices[fine.elements].reshape(-1, 2)
    lam = coarse.barycentric(np.repeat(parents, 3), corners)
    if np.any(lam < -tol):
        raise MeshError("meshes are not nested")
    return parents


def _order_pair(u, w):
    if u.mesh.n_elements <= w.mesh.n_elements:
        return u, w
    return w, u


def error_vs_reference(u_coarse: MorleyFunction, u_ref: MorleyFunction, j: int) -> float:
    """``|u_coarse - u_ref|_{j,2,h}`` over the finer of two nested meshes.

    Both fields are quadratic on each fine element, so a degree-4 rule is exact.
    The result does not depend on argument order.
    """
    if j not in (0, 1, 2):
        raise ValueError(f"derivative order must be 0, 1 or 2, got {j}")
    coarse, fine = _order_pair(u_coarse, u_ref)
    parents = nested_parents(coarse.mesh, fine.mesh)
    eb = element_basis(fine.mesh)
    rule = triangle_rule(0 if j == 2 else (4 if j == 0 else 2))
    X = eb.physical_points(rule)
    T, q = X.shape[:2]
    pts = X.reshape(-1, 2)
    fe = np.repeat(np.arange(T), q)
    diff = _morley_derivatives(fine, fe, pts, j) - _morley_derivatives(
        coarse, np.repeat(parents, q), pts, j
    )
    integrand = (diff**2).sum(axis=-1).reshape(T, q)
    return math.sqrt(_sum_over_elements(fine.mesh, rule, integrand))


def sample_lattice(mesh: Mesh, m: int = 6):
    """Per-element sample points: barycentric lattice of step 1/m plus the centroid.

    Returns element indices (N,) and points (N, 2). The lattice includes the
    vertices and, for even ``m``, the edge midpoints; for ``m`` divisible by 3
    the centroid is a lattice point already.
    """
    bary = [(i / m, jj / m, (m - i - jj) / m) for i in range(m + 1) for jj in range(m + 1 - i)]
    if m % 3:
        bary.append((1 / 3, 1 / 3, 1 / 3))
    bary = np.array(bary)
    X = np.einsum("qi,tid->tqd", bary, mesh.vertices[mesh.elements])
    return np.repeat(np.arange(mesh.n_elements), len(bary)), X.reshape(-1, 2)


def linf_error(u: MorleyFunction, v) -> float:
    """Max ``|u - v|`` over a deterministic per-element sampling lattice.

    ``v`` is a callable ``(x, y)`` or a Morley field on a nested mesh. A lower
    bound for the true maximum.
    """
    if isinstance(v, MorleyFunction):
        coarse, fine = _order_pair(u, v)
        parents = nested_parents(coarse.mesh, fine.mesh)
        el, pts = sample_lattice(fine.mesh)
        diff = fine.values_at(el, pts) - coarse.values_at(parents[el], pts)
        return float(np.abs(diff).max())
    el, pts = sample_lattice(u.mesh)
    ref = np.broadcast_to(np.asarray(v(pts[:, 0], pts[:, 1]), dtype=float), (len(pts),))
    return float(np.abs(u.values_at(el, pts) - ref).max())


NORM_LABELS = ("L2", "H1", "H2")


@dataclass
class ErrorReport:
    """Errors per mesh level and observed orders between consecutive levels."""

    h: list = field(default_factory=list)
    errors: dict = field(default_factory=lambda: {k: [] for k in NORM_LABELS + ("Linf",)})

    def add(self, h, e_l2, e_h1, e_h2, e_linf=float("nan")):
        if min(e_l2, e_h1, e_h2) < 0:
            raise ValueError("errors must be nonnegative")
        self.h.append(float(h))
        for key, val in zip(NORM_LABELS + ("Linf",), (e_l2, e_h1, e_h2, e_linf)):
            self.errors[key].append(float(val))

    def orders(self, key):
        e = np.asarray(self.errors[key])
        h = np.asarray(self.h)
        with np.errstate(divide="ignore", invalid="ignore"):
            return list(np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:]))

    def rows(self):
        out = []
        for i, h in enumerate(self.h):
            row = {"h": h}
            for key in NORM_LABELS:
                row[f"e_{key}"] = self.errors[key][i]
                row[f"order_{key}"] = self.orders(key)[i - 1] if i else None
            out.append(row)
        return out

    def to_csv(self, path):
        cols = ["h", "e_L2", "order_L2", "e_H1", "order_H1", "e_H2", "order_H2"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in self.rows():
                writer.writerow(
                    ["" if row[c] is None else repr(float(row[c])) for c in cols]
                )

    def format_table(self):
        lines = [f"{'h':>10} " + " ".join(f"{'e_' + k:>12} {'order':>7}" for k in NORM_LABELS)]
        for row in self.rows():
            cells = []
            for k in NORM_LABELS:
                o = row[f"order_{k}"]
                cells.append(f"{row['e_' + k]:12.6g} {'---' if o is None else f'{o:.4f}':>7}")
            lines.append(f"{row['h']:10.5f} " + " ".join(cells))
        return "\n".join(lines)
