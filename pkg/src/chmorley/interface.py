"""Zero level sets of Morley fields and distances between them."""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .mesh import build_uniform_mesh
from .morley import MorleyFunction, element_basis, monomials
from .stepper import SchemeParams, SolverError, run, time_interpolant

log = logging.getLogger(__name__)

BISECTION_TOL = 1e-10
CHAIN_TOL = 1e-9


@dataclass
class InterfaceCurve:
    polylines: list = field(default_factory=list)
    r: int = 4

    def __len__(self):
        return len(self.polylines)

    @property
    def empty(self):
        return not self.polylines

    def vertices(self):
        if self.empty:
            return np.empty((0, 2))
        return np.concatenate(self.polylines)

    def segments(self):
        """All segments as an (S, 2, 2) array."""
        segs = [np.stack([pl[:-1], pl[1:]], axis=1) for pl in self.polylines if len(pl) > 1]
        return np.concatenate(segs) if segs else np.empty((0, 2, 2))

    def sample_points(self):
        """Polyline vertices plus segment midpoints."""
        segs = self.segments()
        return np.concatenate([self.vertices(), segs.mean(axis=1)])

    def is_closed(self, i=0, tol=CHAIN_TOL):
        pl = self.polylines[i]
        return len(pl) > 2 and np.linalg.norm(pl[0] - pl[-1]) <= tol

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["polyline_id", "x", "y"])
            for i, pl in enumerate(self.polylines):
                for x, y in pl:
                    w.writerow([i, repr(float(x)), repr(float(y))])

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            lines = fh.read().splitlines()[1:]
        if not lines:
            return cls([])
        rows = np.loadtxt(lines, delimiter=",", ndmin=2)
        ids = rows[:, 0].astype(int)
        return cls([rows[ids == i, 1:] for i in np.unique(ids)])

    def to_svg(self, path, domain=(-1.0, 1.0, -1.0, 1.0), stroke_width=0.005):
        x0, x1, y0, y1 = domain
        paths = []
        for pl in self.polylines:
            d = " ".join(
                f"{'M' if i == 0 else 'L'}{x:.6f},{-y:.6f}" for i, (x, y) in enumerate(pl)
            )
            paths.append(
                f'  <path d="{d}" fill="none" stroke="black" stroke-width="{stroke_width}"/>'
            )
        with open(path, "w") as fh:
            fh.write(
                f'<svg xmlns="http://www.w3.org/2000/svg" '
                f'viewBox="{x0} {-y1} {x1 - x0} {y1 - y0}" width="400" height="400">\n'
            )
            fh.write("\n".join(paths) + ("\n" if paths else ""))
            fh.write("</svg>\n")


def _sub_lattice(r):
    """Integer barycentric counts of an r*r split triangle and its sub-triangles."""
    idx = {}
    counts = []
    for i in range(r + 1):
        for j in range(r + 1 - i):
            idx[i, j] = len(counts)
            counts.append((r - i - j, i, j))
    tris = []
    for i in range(r):
        for j in range(r - i):
            tris.append((idx[i, j], idx[i + 1, j], idx[i, j + 1]))
            if i + j < r - 1:
                tris.append((idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]))
    return np.array(counts), np.array(tris)


def _lattice_ids(mesh, counts, r):
    """Global id of every element lattice point, (T, nq).

    Points on mesh vertices and edges get ids shared by all elements touching
    them, so neighbouring elements agree on the lattice.
    """
    T, V, E = mesh.n_elements, mesh.n_vertices, mesh.n_edges
    n_int = sum(1 for c in counts if c.min() > 0)
    ids = np.empty((T, len(counts)), dtype=np.int64)
    rows = np.arange(T)
    k_int = 0
    for q, c in enumerate(counts):
        if c.max() == r:
            ids[:, q] = mesh.elements[:, int(np.argmax(c))]
        elif c.min() == 0:
            m = int(np.argmin(c))
            e = mesh.element_edges[:, m]
            # position along the stored edge direction, counted from its first vertex
            hi_local = np.argmax(mesh.elements == mesh.edges[e, 1][:, None], axis=1)
            pos = c[hi_local]
            ids[:, q] = V + e * (r - 1) + (pos - 1)
        else:
            ids[:, q] = V + E * (r - 1) + rows * n_int + k_int
            k_int += 1
    return ids


def _bisect(c0, c1, c2, iters=200):
    """Root in [0, 1] of ``c0 + c1 s + c2 s^2`` given a sign change (zero counts as positive)."""
    lo = np.zeros(len(c0))
    hi = np.ones(len(c0))
    pos_lo = c0 >= 0
    s = np.full(len(c0), 0.5)
    for _ in range(iters):
        s = 0.5 * (lo + hi)
        g = c0 + s * (c1 + s * c2)
        done = np.abs(g) <= BISECTION_TOL
        if done.all():
            break
        same = (g >= 0) == pos_lo
        lo = np.where(~done & same, s, lo)
        hi = np.where(~done & ~same, s, hi)
    return s


def extract_zero_set(u: MorleyFunction, r: int = 4) -> InterfaceCurve:
    """Zero level set of ``u`` as polylines.

    Every element is split into ``r*r`` sub-triangles and ``u`` is evaluated
    exactly at the sub-vertices. Morley fields jump across element edges, so on
    points and sub-edges shared by two elements the average of the two traces is
    used. Crossed sub-edges are found from the signs (zero counts as positive),
    the crossing points polished by bisection on the quadratic restriction, and
    segments chained through the sub-edges they share.
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    mesh = u.mesh
    eb = element_basis(mesh)
    counts, tris = _sub_lattice(r)
    bary = counts / r
    X = np.einsum("qi,tid->tqd", bary, mesh.vertices[mesh.elements])  # (T, nq, 2)
    xi = eb.local_coords(X)
    P = u.polynomials()
    vals = np.einsum("tqk,tk->tq", monomials(xi[..., 0], xi[..., 1]), P)
    gid = _lattice_ids(mesh, counts, r)
    n_pts = int(gid.max()) + 1
    mult = np.bincount(gid.ravel(), minlength=n_pts)
    gval = np.bincount(gid.ravel(), weights=vals.ravel(), minlength=n_pts) / np.maximum(mult, 1)
    gpos = np.zeros((n_pts, 2))
    gpos[gid.ravel()] = X.reshape(-1, 2)
    pos = gval >= 0

    # all sub-edges, oriented from the smaller global id to the larger
    local_edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    local_edges = np.unique(np.sort(local_edges, axis=1), axis=0)
    ga, gb = gid[:, local_edges[:, 0]], gid[:, local_edges[:, 1]]
    crossed = pos[ga] != pos[gb]
    el, le = np.nonzero(crossed)
    qa, qb = local_edges[le, 0], local_edges[le, 1]
    flip = ga[el, le] > gb[el, le]
    qa, qb = np.where(flip, qb, qa), np.where(flip, qa, qb)
    ka, kb = gid[el, qa], gid[el, qb]
    # quadratic coefficient of each element's restriction, averaged per global sub-edge
    d = xi[el, qb] - xi[el, qa]
    c2 = P[el, 3] * d[:, 0] ** 2 + P[el, 4] * d[:, 0] * d[:, 1] + P[el, 5] * d[:, 1] ** 2
    key, inv = np.unique(ka * n_pts + kb, return_inverse=True)
    c2 = np.bincount(inv, weights=c2) / np.bincount(inv)
    a_id, b_id = key // n_pts, key % n_pts
    fa, fb = gval[a_id], gval[b_id]
    s = _bisect(fa, fb - fa - c2, c2)
    s = np.where(fa == 0, 0.0, np.where(fb == 0, 1.0, s))
    points = gpos[a_id] + s[:, None] * (gpos[b_id] - gpos[a_id])
    # crossings exactly on a lattice point are identified through that point
    node = np.arange(len(key)) + n_pts
    node = np.where(s == 0.0, a_id, np.where(s == 1.0, b_id, node))
    coords = {}
    for nd, p in zip(node, points):
        coords.setdefault(int(nd), p)

    # each crossed sub-triangle contributes one segment between its two crossings
    edge_node = {}
    for i, (e, q0, q1) in enumerate(zip(el, qa, qb)):
        edge_node[e, q0, q1] = node[inv[i]]
    segments = []
    sv = pos[gid[:, tris]]  # (T, ns, 3)
    n_pos = sv.sum(axis=2)
    for e, st in zip(*np.nonzero((n_pos == 1) | (n_pos == 2))):
        tri = tris[st]
        hits = []
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            ga_, gb_ = gid[e, a], gid[e, b]
            if pos[ga_] != pos[gb_]:
                if ga_ > gb_:
                    a, b = b, a
                hits.append(edge_node[e, a, b])
        if len(hits) == 2 and hits[0] != hits[1]:
            segments.append(hits)
    if not segments:
        return InterfaceCurve([], r)
    return InterfaceCurve(_chain(np.array(segments), coords), r)


def _chain(ends, coords):
    """Join segments given as node pairs into polylines of points."""
    ends = np.unique(np.sort(ends, axis=1), axis=0)
    m = len(ends)
    adj = {}
    for s, (i, j) in enumerate(ends):
        adj.setdefault(int(i), []).append(s)
        adj.setdefault(int(j), []).append(s)
    used = np.zeros(m, dtype=bool)

    def walk(start):
        line = [start]
        cur = start
        while True:
            nxt = next((s for s in adj[cur] if not used[s]), None)
            if nxt is None:
                return line
            used[nxt] = True
            i, j = ends[nxt]
            cur = int(j if i == cur else i)
            line.append(cur)

    polylines = []
    # open curves first, from their loose ends, then closed loops
    starts = sorted(n for n, segs in adj.items() if len(segs) % 2 == 1)
    for n in starts + sorted(adj):
        while any(not used[s] for s in adj[n]):
            polylines.append(np.array([coords[i] for i in walk(n)]))
    return polylines


def _point_segment_distances(points, segs):
    """Distance from each point to the nearest segment, (N,)."""
    a = segs[:, 0]
    d = segs[:, 1] - a
    dd = np.maximum((d**2).sum(axis=1), 1e-300)
    out = np.empty(len(points))
    chunk = max(1, 2_000_000 // max(len(segs), 1))
    for s in range(0, len(points), chunk):
        p = points[s : s + chunk]
        rel = p[:, None, :] - a[None, :, :]
        t = np.clip((rel * d[None]).sum(axis=2) / dd[None], 0.0, 1.0)
        diff = rel - t[..., None] * d[None]
        out[s : s + chunk] = np.sqrt((diff**2).sum(axis=2).min(axis=1))
    return out


def _as_segments(B):
    segs = B.segments()
    if len(segs) == 0:
        # isolated points count as zero-length segments
        v = B.vertices()
        segs = np.stack([v, v], axis=1)
    return segs


def hausdorff_one_sided(A: InterfaceCurve, B: InterfaceCurve) -> float:
    """``max_{x in A} dist(x, B)`` over A's vertices and segment midpoints."""
    if A.empty or B.empty:
        raise ValueError("one-sided distance needs two nonempty curves")
    return float(_point_segment_distances(A.sample_points(), _as_segments(B)).max())


def hausdorff(A: InterfaceCurve, B: InterfaceCurve) -> float:
    return max(hausdorff_one_sided(A, B), hausdorff_one_sided(B, A))


def curve_name(eps, t, ext):
    return f"curve_eps{eps:g}_t{t:g}.{ext}"


@dataclass
class InterfaceStudyResult:
    curves: dict  # (eps, t) -> InterfaceCurve
    distances: list  # rows of dicts
    trajectories: dict = field(default_factory=dict, repr=False)

    def write(self, out_dir, domain=(-1.0, 1.0, -1.0, 1.0)):
        os.makedirs(out_dir, exist_ok=True)
        for (eps, t), curve in self.curves.items():
            curve.to_csv(os.path.join(out_dir, curve_name(eps, t, "csv")))
            curve.to_svg(os.path.join(out_dir, curve_name(eps, t, "svg")), domain)
        if self.distances:
            cols = ["t", "eps_coarse", "eps_fine", "one_sided", "symmetric"]
            with open(os.path.join(out_dir, "distances.csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(cols)
                for row in self.distances:
                    w.writerow([row[c] for c in cols])


def interface_study(runs, initial_condition, snapshot_times, r=4, domain=(-1.0, 1.0, -1.0, 1.0),
                    newton_tol=1e-10, newton_max_iter=30, alpha0=1.0, init_mode="interpolant",
                    mass_log=None):
    """Run one simulation per ``eps`` and compare the zero level sets.

    ``runs`` is a sequence of ``(eps, n, k)`` with strictly decreasing ``eps``;
    ``initial_condition(eps)`` returns the initial field. Distances are one-sided
    from the curve of each ``eps`` to that of the next smaller ``eps``.
    """
    runs = [(float(e), int(n), float(k)) for e, n, k in runs]
    if not runs:
        raise ValueError("need at least one eps")
    eps_list = [e for e, _, _ in runs]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps values must be strictly decreasing")
    times = sorted(float(t) for t in snapshot_times)
    curves, trajs = {}, {}
    for eps, n, k in runs:
        t_end = max(times) if times else k
        T = max(1, math.ceil(t_end / k - 1e-9)) * k
        params = SchemeParams(eps=eps, k=k, T=T, newton_tol=newton_tol,
                              newton_max_iter=newton_max_iter, alpha0=alpha0,
                              init_mode=init_mode)
        mesh = build_uniform_mesh(n, domain)
        try:
            traj = run(mesh, params, initial_condition(eps), snapshot_times=times)
        except SolverError as exc:
            raise SolverError(f"eps={eps:g}: {exc}") from exc
        if mass_log is not None:
            mass_log[eps] = traj.series("mass")
        trajs[eps] = traj
        for t in times:
            curves[eps, t] = extract_zero_set(time_interpolant(traj, t), r)
        log.info("eps=%g done", eps)
    distances = []
    for t in times:
        for a, b in zip(eps_list, eps_list[1:]):
            A, B = curves[a, t], curves[b, t]
            if A.empty or B.empty:
                continue
            distances.append(dict(t=t, eps_coarse=a, eps_fine=b,
                                  one_sided=hausdorff_one_sided(A, B), symmetric=hausdorff(A, B)))
    return InterfaceStudyResult(curves, distances, trajs)
