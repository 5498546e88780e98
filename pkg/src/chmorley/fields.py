"""Analytic scalar fields with derivatives, used for initial data and error checks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import sympy as sp


def _broadcast(val, x):
    return np.broadcast_to(np.asarray(val, dtype=float), np.shape(x)).copy()


@dataclass(frozen=True)
class ScalarField:
    """A function of ``(x, y)`` with derivatives.

    ``gradient`` returns ``(gx, gy)`` and ``hessian`` returns ``(fxx, fxy, fyy)``.
    ``bilaplacian`` and ``div_flux`` (the map ``x -> div(f'(v) grad v)`` with
    ``f'(v) = 3v^2 - 1``) are only needed for elliptic projection of initial data.
    """

    value: Callable
    gradient: Callable
    hessian: Optional[Callable] = None
    bilaplacian: Optional[Callable] = None
    div_flux: Optional[Callable] = None
    name: str = "field"

    def __call__(self, x, y):
        return _broadcast(self.value(x, y), x)

    @classmethod
    def from_expression(cls, expr, name=None):
        """Build a field and all its derivatives from a sympy expression in x, y."""
        x, y = sp.symbols("x y")
        if isinstance(expr, str):
            expr = sp.sympify(expr, locals={"x": x, "y": y})
        unknown = expr.free_symbols - {x, y}
        if unknown:
            raise ValueError(f"expression has unknown symbols {sorted(map(str, unknown))}")
        gx, gy = sp.diff(expr, x), sp.diff(expr, y)
        fxx, fxy, fyy = sp.diff(gx, x), sp.diff(gx, y), sp.diff(gy, y)
        lap = fxx + fyy
        bilap = sp.diff(lap, x, 2) + sp.diff(lap, y, 2)
        fp = 3 * expr**2 - 1
        divflux = sp.diff(fp * gx, x) + sp.diff(fp * gy, y)

        def lam(e):
            f = sp.lambdify((x, y), e, "numpy")
            return lambda X, Y: _broadcast(f(X, Y), X)

        vx, vy = lam(gx), lam(gy)
        hxx, hxy, hyy = lam(fxx), lam(fxy), lam(fyy)
        return cls(
            value=lam(expr),
            gradient=lambda X, Y: (vx(X, Y), vy(X, Y)),
            hessian=lambda X, Y: (hxx(X, Y), hxy(X, Y), hyy(X, Y)),
            bilaplacian=lam(bilap),
            div_flux=lam(divflux),
            name=name or str(expr),
        )


def constant_field(c: float) -> ScalarField:
    zero = lambda X, Y: np.zeros(np.shape(X))
    return ScalarField(
        value=lambda X, Y: np.full(np.shape(X), float(c)),
        gradient=lambda X, Y: (zero(X, Y), zero(X, Y)),
        hessian=lambda X, Y: (zero(X, Y), zero(X, Y), zero(X, Y)),
        bilaplacian=zero,
        div_flux=zero,
        name=f"constant:{c}",
    )


def ellipse_signed_distance(x, y, a=0.6, b=0.2, tol=1e-12, max_iter=100):
    """Signed distance to the ellipse ``x^2/a^2 + y^2/b^2 = 1`` (positive outside).

    Returns ``(d, nx, ny)`` where ``(nx, ny)`` is the outward unit normal at the
    nearest ellipse point, i.e. the gradient of ``d``. Requires ``a > b``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast(x, y).shape
    px = np.abs(np.broadcast_to(x, shape)).ravel()
    py = np.abs(np.broadcast_to(y, shape)).ravel()
    a2, b2 = a * a, b * b

    # Foot point is (a2 px/(t+a2), b2 py/(t+b2)) where t is the root of
    # g(t) = (a px/(t+a2))^2 + (b py/(t+b2))^2 - 1 on t > -b2.
    # g is convex and decreasing there, so Newton from the left is monotone.
    qx = np.empty_like(px)
    qy = np.empty_like(py)
    off = py > 1e-14
    if np.any(off):
        X, Y = px[off], py[off]
        t = -b2 + b * Y
        for _ in range(max_iter):
            r0 = a * X / (t + a2)
            r1 = b * Y / (t + b2)
            g = r0 * r0 + r1 * r1 - 1
            dg = -2 * (r0 * r0 / (t + a2) + r1 * r1 / (t + b2))
            step = g / dg
            t = t - step
            if np.all(np.abs(step) <= tol * np.maximum(1.0, np.abs(t))):
                break
        qx[off] = a2 * X / (t + a2)
        qy[off] = b2 * Y / (t + b2)
    on_axis = ~off
    if np.any(on_axis):
        X = px[on_axis]
        inner = X < a - b2 / a
        fx = np.where(inner, a2 * X / (a2 - b2), a)
        qx[on_axis] = fx
        qy[on_axis] = b * np.sqrt(np.clip(1 - (fx / a) ** 2, 0.0, None))

    d = np.hypot(px - qx, py - qy)
    outside = (px / a) ** 2 + (py / b) ** 2 >= 1
    d = np.where(outside, d, -d)
    nx, ny = qx / a2, qy / b2
    nrm = np.hypot(nx, ny)
    nx, ny = nx / nrm, ny / nrm
    sx = np.sign(np.broadcast_to(x, shape).ravel())
    sy = np.sign(np.broadcast_to(y, shape).ravel())
    nx = np.where(sx < 0, -nx, nx)
    ny = np.where(sy < 0, -ny, ny)
    return d.reshape(shape), nx.reshape(shape), ny.reshape(shape)


def ellipse_field(eps: float, a=0.6, b=0.2) -> ScalarField:
    """``tanh(d0 / sqrt(2 eps))`` with ``d0`` the signed distance to the ellipse."""
    w = np.sqrt(2 * eps)

    def value(X, Y):
        d, _, _ = ellipse_signed_distance(X, Y, a, b)
        return np.tanh(d / w)

    def gradient(X, Y):
        d, nx, ny = ellipse_signed_distance(X, Y, a, b)
        s = (1 - np.tanh(d / w) ** 2) / w
        return s * nx, s * ny

    return ScalarField(value=value, gradient=gradient, name=f"ellipse(eps={eps})")


def two_circle_expression(eps: float):
    x, y = sp.symbols("x y")
    e = sp.nsimplify(eps)
    return sp.tanh(((x - sp.Rational(3, 10)) ** 2 + y**2 - sp.Rational(1, 16)) / e) * sp.tanh(
        ((x + sp.Rational(3, 10)) ** 2 + y**2 - sp.Rational(9, 100)) / e
    )


def two_circle_field(eps: float) -> ScalarField:
    """Product of two tanh circle profiles centred at (+-0.3, 0), radii 0.25 and 0.3."""
    return ScalarField.from_expression(two_circle_expression(eps), name=f"twocircle(eps={eps})")


def initial_condition(spec: str):
    """Map an initial-condition spec to a factory ``eps -> ScalarField``.

    ``ellipse`` and ``twocircle`` are the two built-in tests, ``constant:<c>`` a
    constant state, and ``expr:<expression>`` any sympy expression in ``x``, ``y``
    and optionally ``eps``.
    """
    spec = spec.strip()
    if spec == "ellipse":
        return ellipse_field
    if spec == "twocircle":
        return two_circle_field
    if spec.startswith("constant:"):
        c = float(spec.split(":", 1)[1])
        return lambda eps: constant_field(c)
    if spec.startswith("expr:"):
        text = spec.split(":", 1)[1]
        x, y, e = sp.symbols("x y eps")
        expr = sp.sympify(text, locals={"x": x, "y": y, "eps": e})
        return lambda eps: ScalarField.from_expression(
            expr.subs(e, sp.nsimplify(eps)), name=text
        )
    raise ValueError(f"unknown initial condition {spec!r}")
