import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from vemcdr.cli import run
from vemcdr.config import ConfigError, ConfigNotFound, load_config, parse_config
from vemcdr.harness import CSV_HEADER
from vemcdr.mesh import read_mesh

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
[mesh]
kind = "quad"
nx = 3
ny = 3

[coefficients]
eps = 1.0
bx = "1"
by = "0"
c = "1"
f = "1 + x"
ub = "0"

[exact]
u = "0"
ux = "0"
uy = "0"

[study]
k = 2
levels = 2
n0 = 2
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return p


def test_mesh_written(tmp_path, capsys):
    out = tmp_path / "m.vempoly"
    assert run(["mesh", "--kind", "quad", "--nx", "2", "--ny", "2", "--out", str(out)]) == 0
    m = read_mesh(out.read_bytes())
    assert m.n_cells == 4
    assert "cells 4" in capsys.readouterr().out


def test_mesh_inspect_file(tmp_path, capsys):
    out = tmp_path / "m.vempoly"
    run(["mesh", "--kind", "hex_dominant", "--nx", "3", "--ny", "3", "--out", str(out)])
    capsys.readouterr()
    assert run(["mesh", "--in", str(out)]) == 0
    assert "rho_Z1" in capsys.readouterr().out
    assert run(["mesh", "--in", str(tmp_path / "nope.vempoly")]) == 1


def test_missing_config(capsys):
    assert run(["solve", "--config", "missing.cfg"]) == 1
    assert "config not found" in capsys.readouterr().err


def test_usage_errors(capsys, small_cfg):
    assert run(["frobnicate"]) == 1
    assert run(["solve", "--config", str(small_cfg), "--bogus"]) == 1
    assert run(["solve", "--config", str(small_cfg), "--k", "7"]) == 1
    assert run(["solve", "--config", str(small_cfg), "--solver", "cg"]) == 1
    assert run(["solve"]) == 1
    assert "usage" in capsys.readouterr().err


def test_convergence_example_config(tmp_path):
    out = tmp_path / "study.csv"
    assert run(["convergence", "--config", str(CONFIGS / "smooth_eps1.cfg"),
                "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 5
    assert lines[1].split(",")[6:] == ["", "", ""]
    for line in lines[2:]:
        assert all(v != "" for v in line.split(",")[6:])


def test_convergence_stdout_and_idempotent(small_cfg, tmp_path, capsys):
    assert run(["convergence", "--config", str(small_cfg)]) == 0
    captured = capsys.readouterr()
    assert captured.out.startswith(CSV_HEADER + "\n")
    assert "level 1 quality" in captured.err
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(["convergence", "--config", str(small_cfg), "--out", str(a)])
    run(["convergence", "--config", str(small_cfg), "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_solve_outputs(small_cfg, tmp_path, capsys):
    out = tmp_path / "sol"
    assert run(["solve", "--config", str(small_cfg), "--out", str(out)]) == 0
    dofs = (out / "dofs.csv").read_text().splitlines()
    assert dofs[0] == "dof,value"
    assert len(dofs) == 1 + 24 * 2 + 9
    cells = (out / "cells.csv").read_text().splitlines()
    assert cells[0] == "cell,center_x,center_y,scale,px,py,coefficient"
    assert len(cells) == 1 + 9 * 6
    assert "err_triple" in capsys.readouterr().out
    first = (out / "dofs.csv").read_bytes()
    assert run(["solve", "--config", str(small_cfg), "--out", str(out)]) == 0
    assert (out / "dofs.csv").read_bytes() == first


def test_solve_overrides(small_cfg, tmp_path, capsys):
    out = tmp_path / "sol"
    assert run(["solve", "--config", str(small_cfg), "--out", str(out), "--k", "1",
                "--solver", "gmres", "--tol", "1e-11", "--delta-mode", "off",
                "--threads", "2"]) == 0
    assert len((out / "dofs.csv").read_text().splitlines()) == 1 + 24
    assert "solver gmres" in capsys.readouterr().out


def test_project_dump(small_cfg, capsys):
    assert run(["project", "--config", str(small_cfg), "--cell", "4"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("# cell 4 k 2 delta_T ")
    for name in ("D 9x6", "P_nabla 6x9", "P_l2 6x9", "P_gx 3x9", "P_gy 3x9",
                 "L_poly 1x9", "a 9x9", "b_sym", "b_skew", "c 9x9", "b_stab"):
        assert f"# {name}" in text
    assert run(["project", "--config", str(small_cfg), "--cell", "99"]) == 1


def test_numerical_failure_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text(SMALL.replace('f = "1 + x"', 'f = "log(x - 2)"'))
    assert run(["solve", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_log_env(small_cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("VEMCDR_LOG", "loud")
    assert run(["solve", "--config", str(small_cfg), "--out", str(tmp_path / "o")]) == 1
    monkeypatch.setenv("VEMCDR_LOG", "debug")
    assert run(["solve", "--config", str(small_cfg), "--out", str(tmp_path / "o")]) == 0


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "vemcdr", "mesh", "--nx", "1", "--ny", "1"],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0
    assert "cells 1" in r.stdout


# configuration files

def test_parse_example_configs():
    cfg = load_config(CONFIGS / "layer_eps1e-6.cfg")
    assert cfg.coeffs.epsilon == 1e-6
    assert cfg.coeffs.bx.constant == 1.0
    assert cfg.mesh.nx == 32 and cfg.exact is None
    cfg = load_config(CONFIGS / "smooth_eps1.cfg")
    assert cfg.levels == 4 and cfg.n0 == 4 and cfg.k == 2
    x = np.array([0.3])
    assert cfg.exact.u(x, x)[0] == pytest.approx(np.sin(0.3 * np.pi) ** 2)


@pytest.mark.parametrize("text, fragment", [
    ("[coefficients]\n", "eps is required"),
    ("[coefficients]\neps = 0\n", "epsilon"),
    ("[coefficients]\neps = 1\nf = \"x+*y\"\n", "[coefficients] f: unexpected '*' at offset 2"),
    ("[coefficients]\neps = 1\ncolour = 2\n", "unknown key"),
    ("[coefficients]\neps = 1\n[plot]\n", "unknown section [plot]"),
    ("[coefficients]\neps = 1\n[study]\nk = 5\n", "k must lie in [1, 4]"),
    ("[coefficients]\neps = 1\n[study]\nlevels = 9\n", "levels"),
    ("[coefficients]\neps = 1\n[solver]\nmethod = \"cg\"\n", "[solver] method"),
    ("[coefficients]\neps = 1\n[mesh]\nnx = 2.5\n", "[mesh] nx"),
    ("[coefficients]\neps = 1\n[exact]\nu = \"x\"\n", "[exact] missing ux, uy"),
    ("[coefficients]\neps = 1\n[stabilization]\ndelta_mode = \"maybe\"\n", "delta_mode"),
    ("[coefficients\neps = 1\n", "line 1"),
])
def test_config_errors_are_located(text, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert fragment in str(exc.value)


def test_config_not_found(tmp_path):
    with pytest.raises(ConfigNotFound, match="config not found"):
        load_config(tmp_path / "x.cfg")


def test_config_numbers_as_fields(tmp_path):
    cfg = parse_config("[coefficients]\neps = 0.5\nc = 2\nbx = 1.5\n"
                       "[mesh]\nfile = \"m.vempoly\"\n", tmp_path)
    assert cfg.coeffs.c.constant == 2.0 and cfg.coeffs.bx.constant == 1.5
    assert cfg.mesh.file == str(tmp_path / "m.vempoly")
