"""Command-line front end: ``chmorley <command> --config <file> [--key value ...]``.

Commands are ``run``, ``converge``, ``interface`` and ``energy``. Configs are flat
``key = value`` files; any key can be overridden on the command line. Exit codes:
0 success, 2 invalid config, 3 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .convergence import ERROR_MODES, check_levels, convergence_study
from .fields import initial_condition
from .interface import curve_name, extract_zero_set, interface_study
from .io import save_dofs
from .mesh import build_uniform_mesh
from .stepper import INIT_MODES, SchemeParams, SolverError, run

COMMANDS = ("run", "converge", "interface", "energy")
EXIT_CONFIG = 2
EXIT_SOLVER = 3
ENV_OUT = "CHMORLEY_OUT"

log = logging.getLogger("chmorley")


class ConfigError(ValueError):
    def __init__(self, name, message):
        self.field = name
        super().__init__(f"{name}: {message}")


# -- config parsing -------------------------------------------------------------


def _split_list(text):
    text = text.strip()
    if text[:1] in "{[(" and text[-1:] in "}])":
        text = text[1:-1]
    return [t.strip() for t in text.split(",") if t.strip()]


def _num(name, text, kind=float, positive=True):
    try:
        val = kind(text)
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected a number, got {text!r}") from None
    if kind is float and not np.isfinite(val):
        raise ConfigError(name, f"must be finite, got {text!r}")
    if positive and val <= 0:
        raise ConfigError(name, f"must be positive, got {text!r}")
    return val


def _nums(name, text, kind=float, positive=True):
    items = _split_list(text)
    if not items:
        raise ConfigError(name, "empty list")
    return [_num(name, t, kind, positive) for t in items]


def _bool(name, text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(name, f"expected true or false, got {text!r}")


@dataclass
class RunConfig:
    command: str
    eps: list
    n: list
    k: list
    T: float | None
    ic: str
    init_mode: str = "interpolant"
    alpha0: float = 1.0
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    snapshots: list = field(default_factory=list)
    out: str = ""
    r: int = 4
    n_ref_mult: int = 2
    error_mode: str = "final"
    report_times: list = field(default_factory=list)
    svg: bool = False
    dump_mesh: bool = False
    energy_tol: float = 1e-12
    workers: int = 1
    domain: tuple = (-1.0, 1.0, -1.0, 1.0)

    def params(self, i=0, T=None) -> SchemeParams:
        return SchemeParams(eps=self.eps[i], k=self.k[i], T=self.T if T is None else T,
                            newton_tol=self.newton_tol, newton_max_iter=self.newton_max_iter,
                            alpha0=self.alpha0, init_mode=self.init_mode)

    def dump(self) -> str:
        """Fully resolved config in the same ``key = value`` format it is read from."""
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, (list, tuple)):
                text = ", ".join(_fmt(v) for v in val)
            elif val is None:
                continue
            else:
                text = _fmt(val)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


KNOWN_KEYS = {f.name for f in fields(RunConfig)}
ALIASES = {"epsilon": "eps", "alpha": "alpha0", "t_final": "T", "output": "out",
           "out_dir": "out", "snapshot_times": "snapshots"}


def read_config_file(path) -> dict:
    raw = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("config", f"line {lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            raw[ALIASES.get(key, key)] = val
    return raw


def parse_overrides(tokens) -> dict:
    """``--key value`` or ``--key=value`` pairs; dashes in keys become underscores."""
    raw = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigError("arguments", f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(key.replace("-", "_"), "missing value on the command line")
            val = tokens[i + 1]
            i += 2
        key = key.replace("-", "_")
        raw[ALIASES.get(key, key)] = val
    return raw


def build_config(command, raw: dict) -> RunConfig:
    """Validate raw string values into a ``RunConfig``."""
    if command not in COMMANDS:
        raise ConfigError("command", f"must be one of {COMMANDS}, got {command!r}")
    # an empty value means "not given"
    raw = {key: val.strip() for key, val in raw.items() if val.strip()}
    given = raw.pop("command", command)
    if given != command:
        raise ConfigError("command", f"config is for {given!r}, not {command!r}")
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown config key")

    def need(name):
        if name not in raw:
            raise ConfigError(name, "missing required field")
        return raw[name]

    multi = command == "interface"
    eps = _nums("eps", need("eps"))
    if len(eps) > 1 and not multi:
        raise ConfigError("eps", f"command {command!r} takes a single value")
    if multi and any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("eps", "values must be strictly decreasing")

    n = _nums("n", need("n"), int)
    if command == "converge":
        try:
            check_levels(n, _num("n_ref_mult", raw.get("n_ref_mult", "2"), int))
        except ValueError as exc:
            name, _, msg = str(exc).partition(": ")
            raise ConfigError(name, msg) from None
    elif multi:
        if len(n) not in (1, len(eps)):
            raise ConfigError("n", "give one value or one per eps")
        n = n * len(eps) if len(n) == 1 else n
    elif len(n) > 1:
        raise ConfigError("n", f"command {command!r} takes a single value")

    k = _nums("k", need("k"))
    if len(k) not in (1, len(eps)):
        raise ConfigError("k", "give one value or one per eps")
    k = k * len(eps) if len(k) == 1 else k

    snapshots = _nums("snapshots", raw["snapshots"], positive=False) if "snapshots" in raw else []
    if any(t < 0 for t in snapshots):
        raise ConfigError("snapshots", "times must be nonnegative")
    if multi:
        if not snapshots:
            raise ConfigError("snapshots", "missing required field")
        T = _num("T", raw["T"]) if "T" in raw else None
    else:
        T = _num("T", need("T"))

    ic = need("ic")
    try:
        initial_condition(ic)
    except Exception as exc:  # sympy raises a zoo of parse errors
        raise ConfigError("ic", str(exc)) from None

    cfg = RunConfig(command=command, eps=eps, n=n, k=k, T=T, ic=ic, snapshots=snapshots)
    if "init_mode" in raw:
        cfg.init_mode = raw["init_mode"]
        if cfg.init_mode not in INIT_MODES:
            raise ConfigError("init_mode", f"must be one of {INIT_MODES}")
    for name in ("alpha0", "newton_tol", "energy_tol"):
        if name in raw:
            setattr(cfg, name, _num(name, raw[name]))
    for name in ("newton_max_iter", "r", "n_ref_mult", "workers"):
        if name in raw:
            setattr(cfg, name, _num(name, raw[name], int))
    for name in ("svg", "dump_mesh"):
        if name in raw:
            setattr(cfg, name, _bool(name, raw[name]))
    if "error_mode" in raw:
        cfg.error_mode = raw["error_mode"]
        if cfg.error_mode not in ERROR_MODES:
            raise ConfigError("error_mode", f"must be one of {ERROR_MODES}")
    if "report_times" in raw:
        cfg.report_times = _nums("report_times", raw["report_times"])
    if "domain" in raw:
        dom = _nums("domain", raw["domain"], positive=False)
        if len(dom) != 4 or dom[1] <= dom[0] or dom[3] <= dom[2]:
            raise ConfigError("domain", "expected x0, x1, y0, y1 with x0 < x1 and y0 < y1")
        cfg.domain = tuple(dom)
    cfg.out = raw.get("out", f"chmorley-{command}")

    horizon = T if T is not None else max(snapshots)
    for name, times in (("snapshots", snapshots), ("report_times", cfg.report_times)):
        for t in times:
            if t > horizon * (1 + 1e-12):
                raise ConfigError(name, f"time {t} is beyond T={horizon}")
    for i in range(len(eps)):
        try:
            p = cfg.params(i, T=horizon if T is None else None)
            if T is not None:
                p.n_steps
        except ValueError as exc:
            raise ConfigError("T" if "whole number" in str(exc) else "params", str(exc)) from None
    return cfg


def load_config(command, path=None, overrides=()) -> RunConfig:
    raw = read_config_file(path) if path else {}
    raw.update(parse_overrides(list(overrides)))
    return build_config(command, raw)


def output_dir(cfg: RunConfig) -> str:
    """``out`` from the config; ``$CHMORLEY_OUT`` replaces its parent directory."""
    root = os.environ.get(ENV_OUT)
    path = os.path.join(root, os.path.basename(os.path.normpath(cfg.out))) if root else cfg.out
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "config.txt"), "w") as fh:
        fh.write(cfg.dump())
    return path


# -- commands -------------------------------------------------------------------


def _mesh(cfg, i=0):
    return build_uniform_mesh(cfg.n[i], cfg.domain)


def cmd_run(cfg: RunConfig) -> int:
    out = output_dir(cfg)
    mesh = _mesh(cfg)
    if cfg.dump_mesh:
        mesh.dump(os.path.join(out, "mesh.txt"))
    params = cfg.params()
    start = time.perf_counter()
    traj = run(mesh, params, initial_condition(cfg.ic)(params.eps), snapshot_times=cfg.snapshots)
    wall = time.perf_counter() - start
    traj.write_diagnostics(os.path.join(out, "diagnostics.csv"))
    for t in sorted(set(cfg.snapshots) | {params.T}):
        u = traj.snapshot(t)
        save_dofs(os.path.join(out, f"u_t{t:g}.dof"), u)
        if cfg.svg:
            extract_zero_set(u, cfg.r).to_svg(
                os.path.join(out, curve_name(params.eps, t, "svg")), cfg.domain)
    mass = traj.series("mass")
    print(f"steps {params.n_steps}  final mass {mass[-1]:.12g}  "
          f"max mass drift {np.abs(mass - mass[0]).max():.3e}  "
          f"final energy {traj.series('energy')[-1]:.12g}  wall time {wall:.2f}s")
    print(f"output written to {out}")
    return 0


def cmd_converge(cfg: RunConfig) -> int:
    out = output_dir(cfg)
    times = cfg.report_times or [cfg.T]
    res = convergence_study(cfg.n, cfg.params(), initial_condition(cfg.ic), cfg.n_ref_mult,
                            report_times=times, mode=cfg.error_mode, domain=cfg.domain,
                            workers=cfg.workers)
    for n, traj in res.trajectories.items():
        traj.write_diagnostics(os.path.join(out, f"diagnostics_n{n}.csv"))
    for t, report in res.reports.items():
        name = "errors.csv" if len(times) == 1 else f"errors_t{t:g}.csv"
        report.to_csv(os.path.join(out, name))
        print(f"t = {t:g}  ({cfg.error_mode} errors, reference n = {res.n_ref})")
        print(report.format_table())
        linf = ", ".join(f"{e:.4g}" for e in report.errors["Linf"])
        print(f"Linf (sampled): {linf}")
    drift = max(res.max_mass_drift().values())
    print(f"max mass drift over all levels {drift:.3e}")
    return 0


def cmd_interface(cfg: RunConfig) -> int:
    out = output_dir(cfg)
    runs = list(zip(cfg.eps, cfg.n, cfg.k))
    res = interface_study(runs, initial_condition(cfg.ic), cfg.snapshots, r=cfg.r,
                          domain=cfg.domain, newton_tol=cfg.newton_tol,
                          newton_max_iter=cfg.newton_max_iter, alpha0=cfg.alpha0,
                          init_mode=cfg.init_mode)
    res.write(out, cfg.domain)
    for eps, traj in res.trajectories.items():
        traj.write_diagnostics(os.path.join(out, f"diagnostics_eps{eps:g}.csv"))
    for row in res.distances:
        print(f"t={row['t']:g}  eps {row['eps_coarse']:g} -> {row['eps_fine']:g}: "
              f"one-sided {row['one_sided']:.6g}  symmetric {row['symmetric']:.6g}")
    print(f"{len(res.curves)} curves written to {out}")
    return 0


def energy_increases(energies, tol=1e-12):
    """Steps ``n`` where ``E[n] - E[n-1] > tol``, with the increments."""
    inc = np.diff(np.asarray(energies, dtype=float))
    bad = np.nonzero(inc > tol)[0]
    return [(int(i) + 1, float(inc[i])) for i in bad]


def cmd_energy(cfg: RunConfig) -> int:
    out = output_dir(cfg)
    params = cfg.params()
    traj = run(_mesh(cfg), params, initial_condition(cfg.ic)(params.eps))
    E = traj.series("energy")
    inc = np.concatenate([[0.0], np.diff(E)])
    flagged = energy_increases(E, cfg.energy_tol)
    with open(os.path.join(out, "energy.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "time", "energy", "increment", "increased"])
        for row, e, d in zip(traj.diagnostics, E, inc):
            w.writerow([row["step"], repr(row["time"]), repr(float(e)), repr(float(d)),
                        int(d > cfg.energy_tol)])
    lines = [f"initial energy {E[0]:.12g}", f"final energy {E[-1]:.12g}",
             f"steps with an increase above {cfg.energy_tol:g}: {len(flagged)}"]
    lines += [f"  step {s}: +{d:.3e}" for s, d in flagged]
    report = "\n".join(lines)
    with open(os.path.join(out, "energy_report.txt"), "w") as fh:
        fh.write(report + "\n")
    print(report)
    return 0


HANDLERS = {"run": cmd_run, "converge": cmd_converge, "interface": cmd_interface,
            "energy": cmd_energy}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="chmorley",
        description="Morley finite element solver for the Cahn-Hilliard equation.",
        epilog="Any config key may be overridden as --key value.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every step")
    args, rest = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.command, args.config, rest)
    except ConfigError as exc:
        print(f"chmorley: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return HANDLERS[args.command](cfg)
    except SolverError as exc:
        print(f"chmorley: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
