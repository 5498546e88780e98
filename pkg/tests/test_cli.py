import csv
import os

import numpy as np
import pytest

from chmorley.cli import ConfigError, build_config, load_config, main, parse_overrides, read_config_file
from chmorley.io import load_dofs


def write_config(path, **kv):
    path.write_text("".join(f"{k} = {v}\n" for k, v in kv.items()))
    return str(path)


TEST2 = dict(eps=0.08, k="1e-5", T="0.0002", ic="twocircle")


@pytest.fixture(autouse=True)
def _isolate_output(tmp_path, monkeypatch):
    monkeypatch.delenv("CHMORLEY_OUT", raising=False)
    monkeypatch.chdir(tmp_path)


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_test2_diagnostics(tmp_path, capsys):
    cfg = write_config(tmp_path / "t2.cfg", n=40, **TEST2)
    assert main(["run", "--config", cfg, "--out", "r"]) == 0
    rows = read_rows(tmp_path / "r" / "diagnostics.csv")
    assert len(rows) == 21 and rows[-1]["step"] == "20"
    assert list(rows[0]) == ["step", "time", "mass", "energy", "newton_iters", "residual"]
    assert (tmp_path / "r" / "config.txt").exists()
    out = capsys.readouterr().out
    assert "final mass" in out and "wall time" in out and "energy" in out


def test_run_constant_ic(tmp_path):
    cfg = write_config(tmp_path / "c.cfg", eps=0.05, n=4, k="1e-3", T="0.005", ic="constant:0.3",
                       snapshots="0.002", svg="true")
    assert main(["run", "--config", cfg, "--out", "c"]) == 0
    rows = read_rows(tmp_path / "c" / "diagnostics.csv")
    assert all(abs(float(r["mass"]) - 0.3) <= 1e-10 for r in rows)
    assert len({r["energy"] for r in rows}) == 1
    u = load_dofs(tmp_path / "c" / "u_t0.005.dof")
    assert u.mesh.grid[0] == 4
    assert np.allclose(u.vertex_values, 0.3)
    assert (tmp_path / "c" / "u_t0.002.dof").exists()
    assert (tmp_path / "c" / "curve_eps0.05_t0.002.svg").exists()


def test_identical_config_gives_identical_csv(tmp_path):
    cfg = write_config(tmp_path / "a.cfg", n=8, **TEST2)
    for out in ("a", "b"):
        assert main(["run", "--config", cfg, "--out", out]) == 0
    a = (tmp_path / "a" / "diagnostics.csv").read_bytes()
    assert a == (tmp_path / "b" / "diagnostics.csv").read_bytes()


def test_missing_eps_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.cfg", n=10, k="1e-5", T="1e-4", ic="twocircle")
    assert main(["run", "--config", cfg]) == 2
    assert "eps" in capsys.readouterr().err


@pytest.mark.parametrize("override, field", [
    (["--k", "-1"], "k"),
    (["--n", "0"], "n"),
    (["--ic", "blob"], "ic"),
    (["--init-mode", "exact"], "init_mode"),
    (["--T", "0.000105"], "T"),
    (["--snapshots", "1"], "snapshots"),
    (["--bogus", "1"], "bogus"),
    (["--n", "10,20"], "n"),
])
def test_validation_errors_name_field(tmp_path, capsys, override, field):
    cfg = write_config(tmp_path / "t.cfg", n=10, **TEST2)
    assert main(["run", "--config", cfg] + override) == 2
    assert field in capsys.readouterr().err


def test_non_nested_levels_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path / "t.cfg", n="{10,30}", **TEST2)
    assert main(["converge", "--config", cfg]) == 2
    assert "n:" in capsys.readouterr().err
    assert main(["converge", "--config", cfg, "--n", "10,20", "--n-ref-mult", "3"]) == 2


def test_solver_failure_exits_3(tmp_path, capsys):
    cfg = write_config(tmp_path / "t.cfg", eps=0.08, n=10, k="0.01", T="0.02", ic="twocircle",
                       newton_max_iter=1)
    assert main(["run", "--config", cfg]) == 3
    err = capsys.readouterr().err
    assert "step 1" in err and "residual" in err


def test_overrides_beat_file_and_echo(tmp_path):
    cfg = write_config(tmp_path / "t.cfg", n=10, **TEST2)
    c = load_config("run", cfg, ["--n", "6", "--alpha0=2.5", "--out", "x"])
    assert c.n == [6] and c.alpha0 == 2.5
    text = c.dump()
    assert "n = 6" in text and "alpha0 = 2.5" in text
    # the echo is itself a valid config
    (tmp_path / "echo.cfg").write_text(text)
    assert load_config("run", tmp_path / "echo.cfg") == c


def test_config_parsing_details(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\neps = 0.1   # trailing\n\nepsilon = 0.2\n")
    assert read_config_file(p) == {"eps": "0.2"}
    p.write_text("eps 0.1\n")
    with pytest.raises(ConfigError):
        read_config_file(p)
    with pytest.raises(ConfigError):
        parse_overrides(["--eps"])
    assert parse_overrides(["--newton-tol", "1e-9"]) == {"newton_tol": "1e-9"}


def test_command_mismatch_and_lists():
    raw = dict(eps="0.1", n="4", k="1e-3", T="1e-2", ic="constant:0")
    with pytest.raises(ConfigError):
        build_config("run", dict(raw, command="energy"))
    with pytest.raises(ConfigError) as info:
        build_config("interface", dict(raw, eps="0.04, 0.08", snapshots="0"))
    assert info.value.field == "eps"
    c = build_config("interface", dict(raw, eps="0.08, 0.04", snapshots="0, 0.005", T=""))
    assert c.n == [4, 4] and c.k == [1e-3, 1e-3]
    c = build_config("run", dict(raw, ic="expr:tanh((x**2 + y**2 - 0.25)/eps)"))
    assert c.ic.startswith("expr:")


def test_env_var_overrides_output_root(tmp_path, monkeypatch):
    root = tmp_path / "elsewhere"
    monkeypatch.setenv("CHMORLEY_OUT", str(root))
    cfg = write_config(tmp_path / "c.cfg", eps=0.1, n=3, k="1e-3", T="2e-3", ic="constant:0.5")
    assert main(["energy", "--config", cfg, "--out", "deep/e"]) == 0
    assert (root / "e" / "energy.csv").exists()
    assert (root / "e" / "config.txt").exists()


def test_energy_constant_zero_increments(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.cfg", eps=0.1, n=3, k="1e-3", T="3e-3", ic="constant:-0.2")
    assert main(["energy", "--config", cfg, "--out", "e"]) == 0
    rows = read_rows(tmp_path / "e" / "energy.csv")
    assert [float(r["increment"]) for r in rows] == [0.0] * 4
    assert all(r["increased"] == "0" for r in rows)
    assert ": 0" in (tmp_path / "e" / "energy_report.txt").read_text()


def test_energy_twocircle_initial_positive(tmp_path):
    cfg = write_config(tmp_path / "c.cfg", n=10, eps=0.08, k="1e-5", T="2e-5", ic="twocircle")
    assert main(["energy", "--config", cfg, "--out", "e"]) == 0
    E0 = float(read_rows(tmp_path / "e" / "energy.csv")[0]["energy"])
    assert np.isfinite(E0) and E0 > 0


def test_energy_flags_increases():
    from chmorley.cli import energy_increases

    assert energy_increases([3.0, 2.0, 2.5, 2.5 + 1e-13, 1.0]) == [(2, 0.5)]


def test_interface_curve_count(tmp_path):
    cfg = write_config(tmp_path / "i.cfg", eps="0.4, 0.3, 0.25, 0.2", n=8, k="1e-3", ic="ellipse",
                       snapshots="0, 0.002, 0.003, 0.005")
    assert main(["interface", "--config", cfg, "--out", "i"]) == 0
    files = os.listdir(tmp_path / "i")
    assert sum(f.startswith("curve_") and f.endswith(".csv") for f in files) == 16
    assert sum(f.startswith("curve_") and f.endswith(".svg") for f in files) == 16
    assert len(read_rows(tmp_path / "i" / "distances.csv")) == 12
    assert "config.txt" in files


def test_interface_single_eps(tmp_path):
    cfg = write_config(tmp_path / "i.cfg", eps="0.3", n=6, k="1e-3", ic="ellipse", snapshots="0, 0.001")
    assert main(["interface", "--config", cfg, "--out", "i"]) == 0
    files = os.listdir(tmp_path / "i")
    assert "distances.csv" not in files
    assert sum(f.startswith("curve_") for f in files) == 4


def test_converge_small(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.cfg", n="4, 8", eps=0.3, k="1e-3", T="2e-3", ic="twocircle",
                       report_times="1e-3, 2e-3")
    assert main(["converge", "--config", cfg, "--out", "cv"]) == 0
    files = set(os.listdir(tmp_path / "cv"))
    assert {"errors_t0.001.csv", "errors_t0.002.csv", "config.txt",
            "diagnostics_n4.csv", "diagnostics_n8.csv", "diagnostics_n16.csv"} <= files
    rows = read_rows(tmp_path / "cv" / "errors_t0.002.csv")
    assert list(rows[0]) == ["h", "e_L2", "order_L2", "e_H1", "order_H1", "e_H2", "order_H2"]
    assert len(rows) == 2 and rows[0]["order_L2"] == ""
    assert main(["converge", "--config", cfg, "--out", "cvmax", "--error-mode", "max"]) == 0
    fin = read_rows(tmp_path / "cv" / "errors_t0.002.csv")
    mx = read_rows(tmp_path / "cvmax" / "errors_t0.002.csv")
    for a, b in zip(fin, mx):
        assert float(b["e_L2"]) >= float(a["e_L2"])


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "chmorley", "run"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "eps" in proc.stderr
