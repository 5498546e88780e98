"""Spatial convergence studies against a nested reference solution."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .mesh import build_uniform_mesh
from .morley import MorleyFunction
from .norms import ErrorReport, error_vs_reference, linf_error
from .stepper import SchemeParams, Trajectory, run

ERROR_MODES = ("final", "max")


def check_levels(levels, n_ref_mult=2):
    """Validate a strictly increasing, nested list of mesh sizes; returns ``n_ref``.

    Consecutive sizes must differ by a power-of-two factor so the uniform meshes
    are nested.
    """
    levels = [int(n) for n in levels]
    if not levels:
        raise ValueError("n: need at least one level")
    if min(levels) < 1:
        raise ValueError("n: mesh sizes must be positive")
    for a, b in zip(levels, levels[1:]):
        q = b // a
        if b <= a or b % a or q & (q - 1):
            raise ValueError(f"n: {b} is not a nested refinement of {a} by a power of 2")
    m = int(n_ref_mult)
    if m != n_ref_mult or m < 2 or m & (m - 1):
        raise ValueError("n_ref_mult: must be a power of 2 and at least 2")
    return levels[-1] * m


def _run_level(n, params, initial_condition, domain, keep_steps, keep_all):
    mesh = build_uniform_mesh(n, domain)
    traj = run(mesh, params, initial_condition(params.eps), keep_all=keep_all,
               snapshot_times=[s * params.k for s in keep_steps])
    return traj


def _solve(n, params, initial_condition, domain, keep_steps, keep_all):
    # Worker entry point: ship plain arrays back rather than mesh-bound objects.
    traj = _run_level(n, params, initial_condition, domain, keep_steps, keep_all)
    return {s: u.coefficients for s, u in traj.states.items()}, traj.diagnostics


@dataclass
class ConvergenceResult:
    levels: list
    n_ref: int
    reports: dict  # report time -> ErrorReport
    trajectories: dict = field(default_factory=dict)  # n -> Trajectory

    def max_mass_drift(self):
        out = {}
        for n, traj in self.trajectories.items():
            m = traj.series("mass")
            out[n] = float(np.abs(m - m[0]).max())
        return out


def convergence_study(levels, params: SchemeParams, initial_condition, n_ref_mult=2,
                      report_times=None, mode="final", domain=(-1.0, 1.0, -1.0, 1.0),
                      workers=1) -> ConvergenceResult:
    """Run every level and the reference level, then tabulate errors.

    ``report_times`` defaults to ``[T]``; each time gives one ``ErrorReport``.
    With ``mode="max"`` the error at a report time ``t`` is the maximum over all
    grid times up to ``t``, otherwise it is the error at ``t`` itself.
    """
    if mode not in ERROR_MODES:
        raise ValueError(f"error_mode: must be one of {ERROR_MODES}")
    n_ref = check_levels(levels, n_ref_mult)
    levels = [int(n) for n in levels]
    times = [params.T] if report_times is None else sorted(float(t) for t in report_times)
    n_steps = params.n_steps
    steps = []
    for t in times:
        s = t / params.k
        if abs(s - round(s)) > 1e-9 * max(1.0, s) or not 0 <= round(s) <= n_steps:
            raise ValueError(f"report_times: {t} is not a grid time in [0, T]")
        steps.append(int(round(s)))
    keep_all = mode == "max"
    sizes = levels + [n_ref]
    jobs = [(n, params, initial_condition, domain, steps, keep_all) for n in sizes]

    trajectories = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve, *zip(*jobs)))
        for n, (states, diag) in zip(sizes, results):
            mesh = build_uniform_mesh(n, domain)
            traj = Trajectory(mesh, params, diagnostics=diag)
            traj.states = {s: MorleyFunction(mesh, c) for s, c in states.items()}
            trajectories[n] = traj
    else:
        for job in jobs:
            trajectories[job[0]] = _run_level(*job)

    ref = trajectories[n_ref]
    reports = {}
    for t, s in zip(times, steps):
        report = ErrorReport()
        for n in levels:
            traj = trajectories[n]
            span = range(0, s + 1) if keep_all else [s]
            errs = np.zeros(4)
            for i in span:
                u, w = traj.states[i], ref.states[i]
                e = [error_vs_reference(u, w, j) for j in (0, 1, 2)] + [linf_error(u, w)]
                errs = np.maximum(errs, e)
            report.add(traj.mesh.h, *errs)
        reports[t] = report
    return ConvergenceResult(levels, n_ref, reports, trajectories)


def observed_order(e_coarse, e_fine, ratio=2.0):
    return math.log(e_coarse / e_fine) / math.log(ratio)
