"""Global matrices and the nonlinear term of the Morley Cahn-Hilliard scheme.

All local element arrays are scattered through a fixed CSR pattern per mesh
with ``np.bincount`` in a fixed summation order, which makes every assembled
matrix bitwise reproducible.
"""
from __future__ import annotations

import weakref

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .morley import MorleyFunction, element_basis
from .quadrature import triangle_rule

# a_h integrand as a quadratic form on Hessians (xx, xy, yy), Poisson ratio 1/2
PLATE_FORM = np.array(
    [
        [1.0, 0.0, 0.5],
        [0.0, 1.0, 0.0],
        [0.5, 0.0, 1.0],
    ]
)

NONLINEAR_DEGREE = 6
MASS_DEGREE = 4


def fprime(u):
    return 3.0 * u * u - 1.0


def fsecond(u):
    return 6.0 * u


def _canonical_rank(mesh):
    """Rank of each element in a numbering-independent order (by centroid)."""
    c = mesh.centroids()
    order = np.lexsort((c[:, 1], c[:, 0]))
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order))
    return rank


class _Pattern:
    """CSR sparsity pattern of the Morley DOF graph with a scatter map.

    Contributions to each entry are summed in a fixed geometric element order,
    so assembled values do not depend on how the elements are numbered.
    """

    def __init__(self, mesh: Mesh):
        dofs = element_basis(mesh).dofs
        n = mesh.n_dofs
        rank = _canonical_rank(mesh)
        rows = np.repeat(dofs, 6, axis=1).ravel()
        cols = np.tile(dofs, (1, 6)).ravel()
        key = rows * n + cols
        uniq, scatter = np.unique(key, return_inverse=True)
        self.perm = np.lexsort((np.repeat(rank, 36), scatter))
        self.scatter = scatter[self.perm]
        self.rows = uniq // n
        self.indices = (uniq % n).astype(np.int32)
        self.indptr = np.searchsorted(self.rows, np.arange(n + 1)).astype(np.int32)
        self.shape = (n, n)
        self.nnz = len(uniq)
        flat = dofs.ravel()
        self.vec_perm = np.lexsort((np.repeat(rank, 6), flat))
        self.vec_scatter = flat[self.vec_perm]

    def matrix(self, local):
        data = np.bincount(self.scatter, weights=np.ascontiguousarray(local).ravel()[self.perm],
                           minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)

    def vector(self, local):
        return np.bincount(self.vec_scatter, weights=np.ascontiguousarray(local).ravel()[self.vec_perm],
                           minlength=self.shape[0])


_PATTERNS: "weakref.WeakKeyDictionary[Mesh, _Pattern]" = weakref.WeakKeyDictionary()


def _pattern(mesh):
    pat = _PATTERNS.get(mesh)
    if pat is None:
        pat = _PATTERNS[mesh] = _Pattern(mesh)
    return pat


def scatter_matrix(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    """Sum local (T, 6, 6) element matrices into a global CSR matrix."""
    return _pattern(mesh).matrix(local)


def scatter_vector(mesh: Mesh, local: np.ndarray) -> np.ndarray:
    return _pattern(mesh).vector(local)


# -- local element arrays -----------------------------------------------------


def _weighted_gram(w, a, b=None):
    """``sum_q w[t,q] a[t,q,i] b[t,q,j]`` as a batched matmul, (T, 6, 6)."""
    b = a if b is None else b
    return np.matmul((a * w[..., None]).transpose(0, 2, 1), b)


def _grad_gram(w, grads):
    """``sum_q w[t,q] grad_i . grad_j`` for gradients (T, q, 6, 2)."""
    T, q = grads.shape[:2]
    g = grads.transpose(0, 1, 3, 2).reshape(T, 2 * q, 6)
    return _weighted_gram(np.repeat(w, 2, axis=1), g)


def local_mass(mesh, rule=None):
    eb = element_basis(mesh)
    rule = rule or triangle_rule(MASS_DEGREE)
    vals, _ = eb.tabulate(rule)
    w = rule.weights[None, :] * eb.areas[:, None]
    return _weighted_gram(w, vals)


def local_stiffness(mesh, rule=None):
    eb = element_basis(mesh)
    # Hessians are constant, so any rule reduces to its weight sum.
    wsum = 1.0 if rule is None else float(rule.weights.sum())
    H = eb.hessians
    return np.einsum("tir,rs,tjs->tij", H, PLATE_FORM, H) * (eb.areas * wsum)[:, None, None]


def local_gradient(mesh, weight=None, rule=None):
    """Local ``int weight grad(phi_i) . grad(phi_j)``; ``weight`` given at rule points (T, q)."""
    eb = element_basis(mesh)
    rule = rule or triangle_rule(NONLINEAR_DEGREE)
    _, grads = eb.tabulate(rule)
    w = rule.weights[None, :] * eb.areas[:, None]
    if weight is not None:
        w = w * weight
    return _grad_gram(w, grads)


# -- global operators -----------------------------------------------------------


def assemble_mass(mesh: Mesh, rule=None) -> sp.csr_matrix:
    return scatter_matrix(mesh, local_mass(mesh, rule))


def assemble_stiffness(mesh: Mesh, rule=None) -> sp.csr_matrix:
    """Matrix of the broken plate form ``a_h`` with Poisson ratio 1/2."""
    return scatter_matrix(mesh, local_stiffness(mesh, rule))


def assemble_gradient(mesh: Mesh, weight=None) -> sp.csr_matrix:
    """Broken ``(weight grad u, grad v)_h`` matrix; unweighted when ``weight`` is None."""
    return scatter_matrix(mesh, local_gradient(mesh, weight))


def assemble_nonlinear(u: MorleyFunction, jacobian=True):
    """Residual ``N(u)_i = (f'(u) grad u, grad phi_i)_h`` and its Jacobian.

    ``f(u) = u^3 - u``. Integrated exactly with the degree-6 symmetric rule.
    """
    mesh = u.mesh
    eb = element_basis(mesh)
    rule = triangle_rule(NONLINEAR_DEGREE)
    vals, grads = eb.tabulate(rule)
    c = u.coefficients[eb.dofs][:, None, :, None]  # (T, 1, 6, 1)
    uq = np.matmul(vals[:, :, None, :], c)[:, :, 0, 0]
    gq = (grads * c).sum(axis=2)  # (T, q, 2)
    wa = rule.weights[None, :] * eb.areas[:, None]
    g_dot = (grads * gq[:, :, None, :]).sum(axis=3)  # grad phi_i . grad u, (T, q, 6)
    fp = fprime(uq) * wa
    N = scatter_vector(mesh, (g_dot * fp[..., None]).sum(axis=1))
    if not jacobian:
        return N, None
    # d/du_j [f'(u) grad u] = f''(u) phi_j grad u + f'(u) grad phi_j
    J_loc = _weighted_gram(fsecond(uq) * wa, g_dot, vals)
    J_loc += _grad_gram(fp, grads)
    return N, scatter_matrix(mesh, J_loc)


def weight_at_rule(mesh: Mesh, w, rule):
    """Values of ``w`` at rule points, (T, q); ``w`` a MorleyFunction or callable."""
    if isinstance(w, MorleyFunction):
        return w.at_rule(rule)[0]
    if np.isscalar(w):
        return np.full((mesh.n_elements, len(rule)), float(w))
    X = element_basis(mesh).physical_points(rule)
    return np.broadcast_to(np.asarray(w(X[..., 0], X[..., 1]), dtype=float), X.shape[:2])


def assemble_shifted_form(mesh: Mesh, w, eps: float, alpha0: float) -> sp.csr_matrix:
    """``eps*A + (1/eps)*K_{f'(w)} + alpha0*eps^-3*M`` for the elliptic projection."""
    if eps <= 0 or alpha0 <= 0:
        raise ValueError("eps and alpha0 must be positive")
    rule = triangle_rule(NONLINEAR_DEGREE)
    weight = fprime(weight_at_rule(mesh, w, rule))
    local = (
        eps * local_stiffness(mesh)
        + local_gradient(mesh, weight, rule) / eps
        + (alpha0 / eps**3) * local_mass(mesh)
    )
    return scatter_matrix(mesh, local)


def load_vector(mesh: Mesh, func, degree=10) -> np.ndarray:
    """``b_i = int func * phi_i`` with a symmetric rule of the given degree."""
    eb = element_basis(mesh)
    rule = triangle_rule(degree)
    vals, _ = eb.tabulate(rule)
    X = eb.physical_points(rule)
    fq = np.broadcast_to(np.asarray(func(X[..., 0], X[..., 1]), dtype=float), X.shape[:2])
    local = np.einsum("tq,tqi->ti", fq * rule.weights * eb.areas[:, None], vals)
    return scatter_vector(mesh, local)


def local_element_matrices(vertices, weight=None):
    """Mass, stiffness and weighted-gradient 6x6 matrices of a single triangle.

    Uses outward-normal DOFs. ``weight`` is a callable ``(x, y) -> values``.
    """
    vertices = np.asarray(vertices, dtype=float)
    mesh = Mesh.from_elements(vertices, [[0, 1, 2]])
    sign = np.concatenate([np.ones(3), mesh.element_edge_signs[0]])
    flip = sign[:, None] * sign[None, :]
    rule = triangle_rule(NONLINEAR_DEGREE)
    w = None if weight is None else weight_at_rule(mesh, weight, rule)
    out = []
    for local in (local_mass(mesh), local_stiffness(mesh), local_gradient(mesh, w, rule)):
        out.append(local[0] * flip)
    return tuple(out)


def dump_matrix(path, A):
    """Coordinate text format: one ``row col value`` line per stored entry."""
    A = sp.coo_matrix(A)
    np.savetxt(path, np.column_stack([A.row, A.col, A.data]), fmt=["%d", "%d", "%.17g"])
