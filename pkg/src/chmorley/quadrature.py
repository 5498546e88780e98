"""Symmetric quadrature rules on triangles.

Points are barycentric triples and weights are normalized to sum to one, so
``area * sum(w * f(x))`` approximates the integral over a triangle.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class Quadrature:
    points: np.ndarray  # (q, 3) barycentric
    weights: np.ndarray  # (q,)
    degree: int

    def __len__(self):
        return len(self.weights)


def _expand(orbits):
    pts, wts = [], []
    for orbit in orbits:
        kind, *vals = orbit
        if kind == "c":
            (w,) = vals
            triples = [(1 / 3, 1 / 3, 1 / 3)]
        elif kind == "a":
            a, w = vals
            triples = [(a, a, 1 - 2 * a), (a, 1 - 2 * a, a), (1 - 2 * a, a, a)]
        else:
            a, b, w = vals
            triples = sorted(set(permutations((a, b, 1 - a - b))))
        pts.extend(triples)
        wts.extend([w] * len(triples))
    return np.array(pts), np.array(wts)


# Dunavant orbits, refined to full double precision against the moment equations.
_ORBITS = {
    1: [("c", 1.0)],
    2: [("a", 1 / 6, 1 / 3)],
    4: [
        ("a", 0.44594849091596488632, 0.2233815896780114657),
        ("a", 0.09157621350977074346, 0.10995174365532186764),
    ],
    6: [
        ("a", 0.24928674517091042129, 0.11678627572637936603),
        ("a", 0.06308901449150222834, 0.050844906370206816921),
        ("ab", 0.053145049844816947353, 0.31035245103378440542, 0.082851075618373575194),
    ],
    8: [
        ("c", 0.14431560767778716825),
        ("a", 0.45929258829272315603, 0.095091634267284624794),
        ("a", 0.17056930775176020662, 0.10321737053471825028),
        ("a", 0.050547228317030975458, 0.032458497623198080311),
        ("ab", 0.0083947774099576053372, 0.26311282963463811342, 0.027230314174434994265),
    ],
    10: [
        ("c", 0.090817990382753580095),
        ("a", 0.48557763338365737737, 0.036725957756466704717),
        ("a", 0.1094815754850370548, 0.045321059435527934783),
        ("ab", 0.14170721941487995476, 0.30793983876412095017, 0.072757916845420108604),
        ("ab", 0.025003534762686386074, 0.24667256063990269392, 0.028327242531057484837),
        ("ab", 0.0095408154002994575802, 0.066803251012200265774, 0.0094216669637328234599),
    ],
}

_RULES = {}
for _deg, _orb in _ORBITS.items():
    _p, _w = _expand(_orb)
    _RULES[_deg] = Quadrature(_p, _w, _deg)


def triangle_rule(degree: int) -> Quadrature:
    """Smallest tabulated symmetric rule exact for polynomials of ``degree``."""
    for d in sorted(_RULES):
        if d >= degree:
            return _RULES[d]
    raise ValueError(f"no symmetric triangle rule of degree {degree}")


def conical_product_rule(m: int) -> Quadrature:
    """Collapsed Gauss-Jacobi product rule with ``m*m`` points (degree ``2m-1``).

    Not symmetric, but built from an independent construction, which makes it a
    useful cross-check for the tabulated rules.
    """
    s, ws = roots_jacobi(m, 1.0, 0.0)  # weight (1-s) on [-1, 1]
    t, wt = roots_jacobi(m, 0.0, 0.0)
    s = (s + 1) / 2
    t = (t + 1) / 2
    ws = ws / 4
    wt = wt / 2
    S, Tt = np.meshgrid(s, t, indexing="ij")
    l1 = S.ravel()
    l2 = ((1 - S) * Tt).ravel()
    w = np.outer(ws, wt).ravel() * 2
    pts = np.column_stack([l1, l2, 1 - l1 - l2])
    return Quadrature(pts, w, 2 * m - 1)


def gauss_legendre_01(m: int):
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(m)
    return (x + 1) / 2, w / 2
