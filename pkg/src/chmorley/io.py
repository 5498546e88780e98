"""Plain-text serialization of Morley coefficient vectors."""
from __future__ import annotations

import numpy as np

from .mesh import build_uniform_mesh
from .morley import MorleyFunction


def save_dofs(path, u: MorleyFunction):
    """One coefficient per line after a header recording ``n`` and the domain."""
    mesh = u.mesh
    if mesh.grid is None:
        raise ValueError("only meshes from build_uniform_mesh can be serialized")
    x0, x1, y0, y1 = mesh.domain
    header = f"chmorley-dofs n={mesh.grid[0]} domain={x0!r},{x1!r},{y0!r},{y1!r} ndofs={mesh.n_dofs}"
    np.savetxt(path, u.coefficients, fmt="%.17g", header=header)


def read_header(path):
    with open(path) as fh:
        line = fh.readline()
    if not line.startswith("# chmorley-dofs"):
        raise ValueError(f"{path} is not a DOF dump")
    meta = dict(item.split("=", 1) for item in line[2:].split()[1:])
    return {
        "n": int(meta["n"]),
        "domain": tuple(float(v) for v in meta["domain"].split(",")),
        "ndofs": int(meta["ndofs"]),
    }


def load_dofs(path, mesh=None) -> MorleyFunction:
    meta = read_header(path)
    if mesh is None:
        mesh = build_uniform_mesh(meta["n"], meta["domain"])
    coeffs = np.loadtxt(path, ndmin=1)
    if len(coeffs) != meta["ndofs"]:
        raise ValueError(f"{path}: expected {meta['ndofs']} values, found {len(coeffs)}")
    return MorleyFunction(mesh, coeffs)
