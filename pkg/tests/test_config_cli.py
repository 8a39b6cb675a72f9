import csv

import numpy as np
import pytest

from stshapeopt.cli import main, observed_order
from stshapeopt.config import parse_config
from stshapeopt.errors import ConfigError

BENCHMARK_CFG = """
# moving-interface benchmark
[problem]
domain = 0 1
t_final = 1.0
interfaces = 0.4 0.6
motion = polynomial1d

[materials]
phase 1 sigma = 10.0
phase 1 nu = constant 1.0
phase 2 sigma = 0.0
phase 2 nu = constant 10.0

[source]
f = (xref-0.4)*(xref-0.6)*sqrt(x)*(1+t-x)

[discretization]
nx = {nx}
nt = {nt}

[objective]
j = u

[descent]
alpha = 0.5
beta = 0.0
tau_init = {tau_init}
theta_tol = 1e-9
max_outer = {max_outer}

[output]
directory = {outdir}
vtk = false
csv = history.csv

[gradient_check]
theta = sin(pi*x)*(0.5+0.3*sin(2*pi*x))
eps = 1e-2 1e-3 1e-4
"""


def write_cfg(tmp_path, nx=20, nt=20, tau_init=100.0, max_outer=2,
              extra=None):
    text = BENCHMARK_CFG.format(nx=nx, nt=nt, tau_init=tau_init,
                                max_outer=max_outer,
                                outdir=tmp_path / "out")
    if extra:
        text += extra
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return path


def test_parse_round_trip(tmp_path):
    cfg = parse_config(write_cfg(tmp_path).read_text())
    assert cfg.interfaces == [0.4, 0.6]
    assert cfg.motion_name == "polynomial1d"
    assert cfg.phase_sigma == {1: 10.0, 2: 0.0}
    assert cfg.n_x == 20 and cfg.n_t == 20
    assert cfg.descent.alpha == 0.5
    assert cfg.gradient_check_eps == [1e-2, 1e-3, 1e-4]
    mesh, layout, source, objective = cfg.build()
    assert mesh.n_elements == 2 * 20 * 20
    assert layout.material(1).sigma == 10.0


def test_parse_reports_line_numbers():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config("[problem]\ninterfaces = 0.4 0.6\nbogus line\n")


MINIMAL_MATERIALS = ("[materials]\nphase 1 sigma = 1\n"
                     "phase 1 nu = constant 1\nphase 2 sigma = 0\n"
                     "phase 2 nu = constant 1\n"
                     "[discretization]\nnx = 8\nnt = 8\n")


def test_unknown_section_and_key_rejected():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[nonsense]\nkey = 1\n")
    with pytest.raises(ConfigError, match="unknown descent key"):
        parse_config("[problem]\ninterfaces = 0.5\n" + MINIMAL_MATERIALS
                     + "[descent]\nwhatever = 1\n")


def test_materials_must_cover_phases():
    with pytest.raises(ConfigError, match="phase 1"):
        parse_config("[problem]\ninterfaces = 0.5\n"
                     "[materials]\nphase 2 sigma = 1\n"
                     "phase 2 nu = constant 1\n"
                     "[discretization]\nnx = 8\nnt = 8\n")


def test_rotation_motion_rejected_for_1d():
    with pytest.raises(ConfigError, match="motion"):
        parse_config("[problem]\ninterfaces = 0.5\nmotion = rotation2d\n")


def test_bad_expression_rejected_with_line():
    with pytest.raises(ConfigError, match="line"):
        parse_config("[problem]\ninterfaces = 0.5\n" + MINIMAL_MATERIALS
                     + "[source]\nf = sin(q)\n")


def test_curve_material_spec():
    cfg = parse_config(
        "[problem]\ninterfaces = 0.5\n"
        "[materials]\nphase 1 sigma = 1\nphase 1 nu = curve 795774.7 200 0.001 6\n"
        "phase 2 sigma = 0\nphase 2 nu = constant 10\n"
        "[discretization]\nnx = 8\nnt = 8\n")
    assert cfg.phase_nu[1].c1 == 200.0


def test_cmd_solve_prints_objective(tmp_path, capsys):
    code = main(["solve", "--config", str(write_cfg(tmp_path, nx=40, nt=40))])
    assert code == 0
    out = capsys.readouterr().out
    assert "J = " in out
    value = float(out.split("J = ")[1].split()[0])
    assert abs(value - 5.3836e-4) < 1e-6


def test_cmd_solve_zero_source(tmp_path, capsys):
    path = write_cfg(tmp_path)
    text = path.read_text().replace(
        "f = (xref-0.4)*(xref-0.6)*sqrt(x)*(1+t-x)", "f = 0")
    path.write_text(text)
    assert main(["solve", "--config", str(path)]) == 0
    assert float(capsys.readouterr().out.split("J = ")[1].split()[0]) == 0.0


def test_cmd_solve_writes_vtk(tmp_path):
    cfg = write_cfg(tmp_path, nx=10, nt=10)
    assert main(["solve", "--config", str(cfg), "--vtk"]) == 0
    assert (tmp_path / "out" / "solution.vtk").exists()


def test_malformed_config_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("[problem\ninterfaces = 0.5\n")
    assert main(["solve", "--config", str(path)]) == 2
    assert "line 1" in capsys.readouterr().err


def test_missing_config_exits_3(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.cfg")]) == 3


def test_unwritable_output_dir_exits_3(tmp_path):
    blocker = tmp_path / "out"
    blocker.write_text("a file, not a directory")
    assert main(["solve", "--config", str(write_cfg(tmp_path))]) == 3


def test_cmd_optimize_writes_history(tmp_path, capsys):
    cfg = write_cfg(tmp_path, nx=16, nt=16, max_outer=2)
    assert main(["optimize", "--config", str(cfg)]) == 0
    with open(tmp_path / "out" / "history.csv") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["iter", "J", "theta_norm", "tau", "newton_iters"]
    assert len(rows) == 4            # header + 2 accepted + final row
    objectives = [float(r[1]) for r in rows[1:]]
    assert objectives[-1] < objectives[0]
    assert "final J" in capsys.readouterr().out


def test_cmd_optimize_zero_budget_history_has_initial_row_only(tmp_path):
    cfg = write_cfg(tmp_path, nx=10, nt=10, max_outer=0)
    assert main(["optimize", "--config", str(cfg)]) == 0
    with open(tmp_path / "out" / "history.csv") as handle:
        rows = list(csv.reader(handle))
    assert len(rows) == 2
    assert int(rows[1][0]) == 0


def test_cmd_check_gradient_passes_on_benchmark(tmp_path, capsys):
    cfg = write_cfg(tmp_path, nx=48, nt=48)
    code = main(["check-gradient", "--config", str(cfg)])
    out = capsys.readouterr().out
    assert code == 0, out
    assert "observed order" in out


def test_cmd_check_gradient_zero_theta_trivially_passes(tmp_path, capsys):
    cfg = write_cfg(tmp_path, nx=16, nt=16,
                    extra=None)
    text = cfg.read_text().replace(
        "theta = sin(pi*x)*(0.5+0.3*sin(2*pi*x))", "theta = 0*x")
    cfg.write_text(text)
    assert main(["check-gradient", "--config", str(cfg)]) == 0
    assert "inf" in capsys.readouterr().out


def test_observed_order_helper():
    assert observed_order([1e-2, 1e-3], [1e-3, 1e-4]) == pytest.approx(1.0)
    assert observed_order([1e-2, 1e-3], [0.0, 0.0]) == np.inf


def test_shipped_configs_parse_and_build():
    from pathlib import Path
    for name in ("moving_interface.cfg", "moving_interface_coarse.cfg"):
        path = Path(__file__).resolve().parents[1] / "configs" / name
        cfg = parse_config(path.read_text())
        mesh, layout, source, objective = cfg.build()
        assert mesh.n_elements == 2 * cfg.n_x * cfg.n_t
