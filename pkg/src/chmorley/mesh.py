"""Triangulations of axis-aligned rectangles with full incidence data."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(eq=False)
class Mesh:
    """Immutable triangle mesh.

    Attributes
    ----------
    vertices : (V, 2) float array
    elements : (T, 3) int array, counterclockwise
    edges : (E, 2) int array; the stored direction fixes the global edge normal,
        which points to the right of the direction of travel ``edges[e, 0] -> edges[e, 1]``
    edge_elements : (E, 2) int array of adjacent elements, ``-1`` for none
    boundary_edge_flags : (E,) bool array
    element_edges : (T, 3) int array; local edge ``i`` is opposite local vertex ``i``
    element_edge_signs : (T, 3) array of +1/-1; +1 when the global normal is the
        element's outward normal on that edge
    h : float, maximum element diameter
    """

    vertices: np.ndarray
    elements: np.ndarray
    edges: np.ndarray
    edge_elements: np.ndarray
    boundary_edge_flags: np.ndarray
    element_edges: np.ndarray
    element_edge_signs: np.ndarray
    h: float
    domain: tuple | None = None
    grid: tuple | None = field(default=None, repr=False)  # (nx, ny) when structured

    @classmethod
    def from_elements(cls, vertices, elements, edges=None, domain=None, grid=None):
        """Derive edge topology from an element list.

        If ``edges`` is given, its rows define the edge set and the stored edge
        directions; otherwise edges are oriented from lower to higher vertex index
        and numbered in lexicographic order.
        """
        vertices = np.asarray(vertices, dtype=float)
        elements = np.asarray(elements, dtype=np.int64)
        p = vertices[elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(area2 <= 0):
            raise MeshError("elements must have positive signed area")

        loc = np.array([[1, 2], [2, 0], [0, 1]])
        local = elements[:, loc]  # (T, 3, 2) in counterclockwise traversal
        keys = np.sort(local, axis=2).reshape(-1, 2)
        if edges is None:
            edges, inv = np.unique(keys, axis=0, return_inverse=True)
        else:
            edges = np.asarray(edges, dtype=np.int64)
            lookup = {tuple(sorted(e)): i for i, e in enumerate(edges.tolist())}
            try:
                inv = np.array([lookup[tuple(k)] for k in keys.tolist()])
            except KeyError as exc:
                raise MeshError(f"element edge {exc} missing from edge list") from None
        inv = inv.reshape(-1, 3)

        element_edge_signs = np.where(local[:, :, 0] == edges[inv][:, :, 0], 1, -1)

        E = len(edges)
        flat = inv.ravel()
        count = np.bincount(flat, minlength=E)
        if np.any(count > 2) or np.any(count == 0):
            raise MeshError("every edge must touch one or two elements")
        order = np.argsort(flat, kind="stable")
        owner = np.repeat(np.arange(len(elements)), 3)[order]
        start = np.concatenate([[0], np.cumsum(count)[:-1]])
        edge_elements = np.full((E, 2), -1, dtype=np.int64)
        edge_elements[:, 0] = owner[start]
        two = count == 2
        edge_elements[two, 1] = owner[start[two] + 1]
        boundary = count == 1

        diam = np.max(
            np.stack([np.linalg.norm(p[:, i] - p[:, j], axis=1) for i, j in loc]), axis=0
        )
        return cls(
            vertices=vertices,
            elements=elements,
            edges=edges,
            edge_elements=edge_elements,
            boundary_edge_flags=boundary,
            element_edges=inv,
            element_edge_signs=element_edge_signs,
            h=float(diam.max()),
            domain=domain,
            grid=grid,
        )

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_dofs(self):
        return self.n_vertices + self.n_edges

    def areas(self):
        p = self.vertices[self.elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_normals(self):
        """Global unit normals, one per edge."""
        t = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        t /= np.linalg.norm(t, axis=1)[:, None]
        return np.column_stack([t[:, 1], -t[:, 0]])

    def edge_midpoints(self):
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def edge_lengths(self):
        return np.linalg.norm(
            self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]], axis=1
        )

    def centroids(self):
        return self.vertices[self.elements].mean(axis=1)

    def total_area(self):
        return float(self.areas().sum())

    def barycentric(self, elements, points):
        """Barycentric coordinates of ``points`` (N, 2) in ``elements`` (N,)."""
        p = self.vertices[self.elements[elements]]
        v0 = p[:, 1] - p[:, 0]
        v1 = p[:, 2] - p[:, 0]
        r = np.asarray(points, dtype=float) - p[:, 0]
        det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
        l1 = (r[:, 0] * v1[:, 1] - r[:, 1] * v1[:, 0]) / det
        l2 = (v0[:, 0] * r[:, 1] - v0[:, 1] * r[:, 0]) / det
        return np.column_stack([1 - l1 - l2, l1, l2])

    def locate_points(self, points, tol=1e-12):
        """Vectorized point location.

        Returns element indices (N,) and barycentric coordinates (N, 3). A point
        on a shared edge or vertex resolves to the lowest containing element index.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.grid is not None:
            cand = self._grid_candidates(points)
        else:
            cand = np.broadcast_to(np.arange(self.n_elements), (len(points), self.n_elements))
        N, C = cand.shape
        valid = cand >= 0
        safe = np.where(valid, cand, 0)
        lam = self.barycentric(safe.ravel(), np.repeat(points, C, axis=0)).reshape(N, C, 3)
        inside = valid & np.all(lam >= -tol, axis=2)
        big = np.iinfo(np.int64).max
        best = np.where(inside, safe, big).min(axis=1)
        if np.any(best == big):
            bad = points[best == big][0]
            raise MeshError(f"point {tuple(bad)} lies outside the mesh")
        lam = self.barycentric(best, points)
        lam = np.clip(lam, 0.0, 1.0)
        lam /= lam.sum(axis=1)[:, None]
        return best, lam

    def locate_point(self, p, tol=1e-12):
        t, lam = self.locate_points(np.asarray(p, dtype=float)[None, :], tol=tol)
        return int(t[0]), lam[0]

    def _grid_candidates(self, points):
        (x0, x1, y0, y1), (nx, ny) = self.domain, self.grid
        dx, dy = (x1 - x0) / nx, (y1 - y0) / ny
        fx = (points[:, 0] - x0) / dx
        fy = (points[:, 1] - y0) / dy
        span = 1e-9
        out = (fx < -span) | (fx > nx + span) | (fy < -span) | (fy > ny + span)
        if np.any(out):
            bad = points[out][0]
            raise MeshError(f"point {tuple(bad)} lies outside the mesh")
        cands = []
        for ox in (-span, span):
            for oy in (-span, span):
                i = np.clip(np.floor(fx + ox), 0, nx - 1).astype(np.int64)
                j = np.clip(np.floor(fy + oy), 0, ny - 1).astype(np.int64)
                sq = j * nx + i
                cands += [2 * sq, 2 * sq + 1]
        return np.column_stack(cands)

    def dump(self, path):
        """Plain-text dump: vertices, elements, edges sections."""
        with open(path, "w") as fh:
            fh.write(f"vertices {self.n_vertices}\n")
            np.savetxt(fh, self.vertices, fmt="%.17g")
            fh.write(f"elements {self.n_elements}\n")
            np.savetxt(fh, self.elements, fmt="%d")
            fh.write(f"edges {self.n_edges}\n")
            np.savetxt(
                fh,
                np.column_stack([self.edges, self.boundary_edge_flags.astype(int)]),
                fmt="%d",
            )


def build_uniform_mesh(n: int, domain=(-1.0, 1.0, -1.0, 1.0)) -> Mesh:
    """Uniform ``n x n`` grid of squares, each cut by its SW-NE diagonal.

    Meshes for ``n`` and ``2n`` are nested. Element ``2*(j*n + i)`` is the lower
    right triangle of square ``(i, j)`` and ``2*(j*n + i) + 1`` the upper left.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise MeshError(f"need n >= 1 subdivisions, got {n!r}")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate rectangle {domain!r}")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (j * (n + 1) + i).ravel()
    v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    elements = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh.from_elements(vertices, elements, domain=(x0, x1, y0, y1), grid=(n, n))
