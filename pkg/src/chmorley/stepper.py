"""Backward Euler time stepping with Newton's method for the Morley scheme.

Each step solves, over the Neumann subspace (boundary-edge DOFs fixed to zero),

    R(u) = M (u - u_prev) / k + eps A u + N(u) / eps = 0

where ``A`` is the plate-form stiffness and ``N`` the term ``(grad f(u), grad v)_h``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import assemble_mass, assemble_nonlinear, assemble_shifted_form, assemble_stiffness, load_vector
from .mesh import Mesh
from .morley import MorleyFunction, free_dofs, interpolate, mean_value, project_boundary
from .norms import energy

log = logging.getLogger(__name__)

INIT_MODES = ("interpolant", "projection")


class SolverError(RuntimeError):
    pass


class NewtonConvergenceError(SolverError):
    def __init__(self, step, residual, iterations):
        self.step = step
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"Newton did not converge at step {step}: residual {residual:.3e} "
            f"after {iterations} iterations"
        )


@dataclass(frozen=True)
class SchemeParams:
    eps: float
    k: float
    T: float
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    alpha0: float = 1.0
    init_mode: str = "interpolant"

    def __post_init__(self):
        for name in ("eps", "k", "T", "newton_tol", "alpha0"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be a positive number, got {val!r}")
        if int(self.newton_max_iter) < 1:
            raise ValueError("newton_max_iter must be at least 1")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}, got {self.init_mode!r}")

    @property
    def n_steps(self) -> int:
        n = round(self.T / self.k)
        if n < 1 or abs(n * self.k - self.T) > 1e-9 * self.T:
            raise ValueError(f"T={self.T} is not a whole number of steps k={self.k}")
        return n


@dataclass(frozen=True)
class SimulationState:
    step: int
    time: float
    u: MorleyFunction
    mass: float
    energy: float
    newton_iters: int = 0
    residual: float = 0.0
    residual_history: tuple = ()


class Stepper:
    """Holds the fixed operators of one (mesh, params) pair."""

    def __init__(self, mesh: Mesh, params: SchemeParams):
        self.mesh = mesh
        self.params = params
        self.free = free_dofs(mesh)
        self.M = assemble_mass(mesh)
        self.A = assemble_stiffness(mesh)
        p = params
        self._linear = (self.M / p.k + p.eps * self.A).tocsr()

    def _state(self, step, u, iters=0, res=0.0, hist=()):
        return SimulationState(
            step=step,
            time=step * self.params.k,
            u=u,
            mass=mean_value(u),
            energy=energy(u, self.params.eps),
            newton_iters=iters,
            residual=res,
            residual_history=tuple(hist),
        )

    def initialize(self, u0) -> SimulationState:
        p = self.params
        if p.init_mode == "interpolant":
            u = project_boundary(interpolate(self.mesh, u0))
            return self._state(0, u)
        if getattr(u0, "bilaplacian", None) is None or getattr(u0, "div_flux", None) is None:
            raise SolverError("projection initialization needs analytic bilaplacian and div_flux")
        alpha = p.alpha0 / p.eps**3
        B = assemble_shifted_form(self.mesh, u0.value, p.eps, p.alpha0)

        def source(x, y):
            return (p.eps * u0.bilaplacian(x, y) - u0.div_flux(x, y) / p.eps
                    + alpha * u0.value(x, y))

        rhs = load_vector(self.mesh, source)
        f = self.free
        try:
            z = _factorize(B[f][:, f].tocsc()).solve(rhs[f])
        except RuntimeError as exc:
            raise SolverError(f"projection matrix is singular: {exc}") from None
        c = np.zeros(self.mesh.n_dofs)
        c[f] = z
        return self._state(0, MorleyFunction(self.mesh, c))

    def residual(self, u: np.ndarray, u_prev: np.ndarray, jacobian=True):
        p = self.params
        N, J = assemble_nonlinear(MorleyFunction(self.mesh, u), jacobian=jacobian)
        R = self._linear @ u - (self.M @ u_prev) / p.k + N / p.eps
        return R, J

    def step(self, state: SimulationState) -> SimulationState:
        p = self.params
        f = self.free
        u_prev = state.u.coefficients
        u = u_prev.copy()
        history = []
        for it in range(p.newton_max_iter + 1):
            R, J = self.residual(u, u_prev)
            r = float(np.abs(R[f]).max())
            history.append(r)
            if not math.isfinite(r):
                raise NewtonConvergenceError(state.step + 1, r, it)
            if r <= p.newton_tol:
                break
            if it == p.newton_max_iter:
                raise NewtonConvergenceError(state.step + 1, r, it)
            jac = (self._linear + J / p.eps)[f][:, f].tocsc()
            try:
                du = _factorize(jac).solve(R[f])
            except RuntimeError as exc:
                raise SolverError(f"singular Jacobian at step {state.step + 1}: {exc}") from None
            u[f] -= du
        return self._state(state.step + 1, MorleyFunction(self.mesh, u), it, r, history)


def _factorize(mat):
    # The Morley DOF graph is structurally symmetric; ordering on A^T + A with a
    # preference for diagonal pivots keeps the fill several times lower than COLAMD.
    return spla.splu(mat, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.01,
                     options=dict(SymmetricMode=True))


def initialize(mesh: Mesh, params: SchemeParams, u0, stepper: Stepper | None = None):
    return (stepper or Stepper(mesh, params)).initialize(u0)


def step(state: SimulationState, params: SchemeParams, stepper: Stepper | None = None):
    return (stepper or Stepper(state.u.mesh, params)).step(state)


@dataclass
class Trajectory:
    """States kept from a run, keyed by step index, plus per-step diagnostics."""

    mesh: Mesh
    params: SchemeParams
    states: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    @property
    def final(self) -> MorleyFunction:
        return self.states[max(self.states)]

    def snapshot(self, t: float) -> MorleyFunction:
        """State at the grid time nearest to ``t``."""
        n = int(round(t / self.params.k))
        if n not in self.states:
            raise KeyError(f"no stored state near t={t}")
        return self.states[n]

    def series(self, key):
        return np.array([row[key] for row in self.diagnostics])

    def write_diagnostics(self, path):
        cols = ["step", "time", "mass", "energy", "newton_iters", "residual"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in self.diagnostics:
                fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                                  for c in cols) + "\n")


def _steps_for(times, k, n_steps):
    keep = {0, n_steps}
    for t in times:
        x = t / k
        if x < -1e-9 or x > n_steps + 1e-9:
            raise ValueError(f"snapshot time {t} outside [0, T]")
        keep.update({int(math.floor(x + 1e-9)), int(math.ceil(x - 1e-9)), int(round(x))})
    return {min(max(s, 0), n_steps) for s in keep}


def run(mesh: Mesh, params: SchemeParams, u0, snapshot_times=(), keep_all=False,
        callback=None, stepper: Stepper | None = None) -> Trajectory:
    """Step from ``t = 0`` to ``T``.

    Keeps the states at the grid times bracketing each requested snapshot time
    (every state when ``keep_all``). ``callback(state)`` is called after each step.
    """
    stepper = stepper or Stepper(mesh, params)
    n_steps = params.n_steps
    keep = _steps_for(snapshot_times, params.k, n_steps)
    traj = Trajectory(mesh, params)
    state = stepper.initialize(u0)

    def record(s):
        traj.diagnostics.append(dict(step=s.step, time=s.time, mass=s.mass, energy=s.energy,
                                     newton_iters=s.newton_iters, residual=s.residual))
        if keep_all or s.step in keep:
            traj.states[s.step] = s.u
        if callback is not None:
            callback(s)

    record(state)
    for _ in range(n_steps):
        state = stepper.step(state)
        record(state)
        log.debug("step %d t=%.6g newton=%d res=%.2e E=%.10g", state.step, state.time,
                  state.newton_iters, state.residual, state.energy)
    return traj


def time_interpolant(traj: Trajectory, t: float) -> MorleyFunction:
    """Piecewise linear in time: ``((t - t_{n-1}) u^n + (t_n - t) u^{n-1}) / k``."""
    k = traj.params.k
    x = t / k
    n_steps = traj.params.n_steps
    if x < -1e-9 or x > n_steps + 1e-9:
        raise ValueError(f"t={t} outside the simulated interval")
    near = int(round(x))
    if abs(x - near) <= 1e-9 and near in traj.states:
        return traj.states[near]
    n = int(math.ceil(x))
    if n not in traj.states or n - 1 not in traj.states:
        raise KeyError(f"states bracketing t={t} were not kept")
    theta = x - (n - 1)
    return MorleyFunction(
        traj.mesh,
        theta * traj.states[n].coefficients + (1 - theta) * traj.states[n - 1].coefficients,
    )


def with_params(params: SchemeParams, **changes) -> SchemeParams:
    return replace(params, **changes)
