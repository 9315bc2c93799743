import os

import numpy as np
import pytest

from mantlefem.driver import (BENCHMARKS, COLUMNS, OUTPUT_DIR_ENV, Simulation, compute_time_step, load_config,
                              parse_config, read_statistics, run_time_loop, setup_benchmark, write_statistics,
                              write_vtk)
from mantlefem.driver.cli import main
from mantlefem.driver.expressions import Expression, is_number
from mantlefem.driver.io import read_vtk_counts, write_vtk_arrays
from mantlefem.driver.manufactured import run_manufactured
from mantlefem.driver.simulation import resolve_output_dir, shear_heating
from mantlefem.driver.statistics import nusselt_number, vrms
from mantlefem.fem import CellQuadrature, FunctionSpace, interpolate
from mantlefem.mesh import create_rectangle


# ---------------------------------------------------------------- configuration
@pytest.mark.parametrize("name", BENCHMARKS)
def test_echo_round_trip(name):
    cfg = setup_benchmark(name)
    again = parse_config(cfg.echo())
    assert again == cfg
    assert again.echo() == cfg.echo()


def test_parse_example_and_defaults(tmp_path):
    text = """
[run]
name = demo
[geometry]
x_extent = 0, 2
global_refinement = 3
[material]
model = king
Di = 0.5        # model parameter
averaging = harmonic
[formulation]
approximation = TALA
mass_strategy = implicit
[time]
steady_tolerance = 1e-4
[temperature_boundary]
top = 0
bottom = 1
[constants]
A = 2
"""
    path = tmp_path / "demo.cfg"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.name == "demo"
    assert cfg.geometry.x_extent == (0.0, 2.0)
    assert cfg.geometry.global_refinement == 3
    assert cfg.material.parameters == {"Di": 0.5}
    assert cfg.material.averaging == "harmonic"
    assert cfg.formulation.approximation == "TALA" and cfg.formulation.mass_strategy == "implicit"
    assert cfg.time.steady_tolerance == 1e-4
    assert cfg.time.cfl == 1.0  # default
    assert cfg.constants == {"A": 2}
    assert cfg.temperature_boundary == {"top": "0", "bottom": "1"}


@pytest.mark.parametrize("text", ["[nonsense]\na = 1\n", "[time]\ncfl_number = 1\n", "[run]\nfoo = 1\n",
                                  "[energy]\nenabled = maybe\n", "[formulation]\napproximation = XYZ\n"])
def test_parse_rejects_bad_input(text):
    with pytest.raises(ValueError):
        parse_config(text)


# ---------------------------------------------------------------- expressions
def test_expression_variables_and_constants():
    ex = Expression("A * sin(pi * x) + depth + z ^ 2 + t", {"A": 2.0})
    x, z = np.array([0.5, 0.0]), np.array([0.25, 1.0])
    np.testing.assert_allclose(ex(x, z, 1.0, 1.0), [2 + 0.75 + 0.0625 + 1, 0 + 0 + 1 + 1])
    assert is_number("3") and not is_number("x")
    np.testing.assert_allclose(Expression("where(x > 0.5, 1, 0)")(np.array([0.2, 0.8]), 0.0), [0, 1])


@pytest.mark.parametrize("text", ["__import__('os')", "x.real", "open('f')", "[x for x in y]", "q + 1",
                                  "lambda: 1"])
def test_expression_rejects_unsafe_or_unknown(text):
    with pytest.raises(ValueError):
        Expression(text)


# ---------------------------------------------------------------- time step and statistics
def test_cfl_example():
    mesh = create_rectangle(((0.0, 1.0), (0.0, 1.0)), (10, 10))
    speed = np.full((mesh.n_active, 4), 5.0)
    assert compute_time_step(mesh, speed, 1.0, 2) == pytest.approx(0.01)
    assert compute_time_step(mesh, 2 * speed, 1.0, 2) == pytest.approx(0.005)
    fine = mesh.refine_global(1)
    assert compute_time_step(fine, np.full((fine.n_active, 4), 5.0), 1.0, 2) == pytest.approx(0.005)
    assert compute_time_step(mesh, np.zeros(mesh.n_active), dt_max=3.0) == 3.0
    with pytest.raises(ValueError):
        compute_time_step(mesh, np.full(mesh.n_active, np.nan))


def test_conductive_nusselt_is_one():
    mesh = create_rectangle(((0.0, 2.0), (0.0, 1.0)), (4, 2)).refine_global(1)
    space = FunctionSpace(mesh, "Q2", 1)
    T = interpolate(lambda x, y: 1 - y, space)
    assert nusselt_number(space, T, mesh, "top") == pytest.approx(1.0, rel=1e-12)
    assert nusselt_number(space, T, mesh, "bottom") == pytest.approx(1.0, rel=1e-12)


def test_vrms_of_uniform_flow():
    mesh = create_rectangle(((0.0, 3.0), (0.0, 1.0)), (3, 1)).refine_global(1)
    space = FunctionSpace(mesh, "Q2", 2)
    u = interpolate(lambda x, y: [1 + 0 * x, 0 * y], space)
    assert vrms(space, u, CellQuadrature(mesh)) == pytest.approx(1.0, rel=1e-12)


def test_shear_heating():
    G = np.array([[0.0, 1.0], [0.0, 0.0]])  # simple shear: eps:eps = 1/2
    assert shear_heating(2.0, G, False) == pytest.approx(2.0)
    D = np.eye(2)  # isotropic expansion has no deviatoric part in 3D-consistent form
    assert shear_heating(1.0, D, False) == pytest.approx(4.0)
    assert shear_heating(1.0, D, True) == pytest.approx(2 * (2 - 4 / 3))


def test_statistics_round_trip(tmp_path):
    rows = [{c: float(i) for c in COLUMNS} for i in range(3)]
    rows[1]["amr_label"] = "max(kelly:T)"
    path = tmp_path / "s.csv"
    write_statistics(rows, path)
    back = read_statistics(path)
    assert len(back) == 3 and list(back[0]) == list(COLUMNS)
    assert back[2]["Nu"] == 2.0 and back[1]["amr_label"] == "max(kelly:T)"
    assert len(COLUMNS) == len(set(COLUMNS))


def test_vtk_single_cell(tmp_path):
    path = tmp_path / "one.vtk"
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    write_vtk_arrays(path, pts, np.array([[0, 1, 2, 3]]), {"T": np.arange(4.0), "u": np.ones((4, 2))},
                     {"eta": np.array([2.0])})
    assert read_vtk_counts(path) == (4, 1)
    text = path.read_text()
    assert "CELL_TYPES 1\n9" in text and "VECTORS u double" in text and "SCALARS eta double 1" in text
    with pytest.raises(ValueError):
        write_vtk_arrays(path, pts, np.array([[0, 1, 2, 3]]), {"T": np.arange(3.0)})


# ---------------------------------------------------------------- simulations
def small_king(steps=3, resolution=8, formulation="ALA"):
    cfg = setup_benchmark("king", resolution=resolution, formulation=formulation, max_steps=steps)
    cfg.output.log = False
    return cfg


def test_time_loop_writes_outputs(tmp_path):
    cfg = small_king()
    cfg.output.vtk_every = 2
    res = run_time_loop(cfg, str(tmp_path))
    assert len(res.statistics) == 3 and res.reason == "max_steps"
    rows = read_statistics(tmp_path / "statistics.csv")
    assert [r["step"] for r in rows] == [1.0, 2.0, 3.0]
    assert parse_config((tmp_path / "config.echo.cfg").read_text()) == cfg
    vtks = sorted(p.name for p in tmp_path.glob("*.vtk"))
    assert vtks == ["solution-00000.vtk", "solution-00002.vtk", "solution-00003.vtk"]
    n_pts, n_cells = read_vtk_counts(tmp_path / "solution-00003.vtk")
    assert (n_pts, n_cells) == (81, 64)
    r = rows[-1]
    assert r["n_cells"] == 64 and r["dt"] > 0 and r["Vrms"] > 0
    assert 0 < r["T_mean"] < 1


def test_continuation_keeps_going():
    from mantlefem.driver import continue_on_finer_mesh
    res = run_time_loop(small_king(2, 4), write_files=False)
    sim = continue_on_finer_mesh(res.simulation)
    assert sim.mesh.n_active == 64
    res2 = run_time_loop(small_king(2, 4), write_files=False, simulation=sim)
    assert [r["step"] for r in res2.statistics] == [3, 4]
    assert res2.statistics[0]["time"] > res.statistics[-1]["time"]


def test_adaptive_run_stays_balanced():
    cfg = setup_benchmark("finite_strain", resolution_level=2, max_steps=4)
    cfg.amr.every = 2
    cfg.output.log = False
    res = run_time_loop(cfg, write_files=False)
    sim = res.simulation
    assert sim.mesh.is_balanced()
    labels = [r["amr_label"] for r in res.statistics]
    assert labels[1] and not labels[0]
    assert res.statistics[1]["n_refined"] > 0
    F = np.stack([sim.composition(n) for n in ("F_xx", "F_xy", "F_yx", "F_yy")], axis=-1)
    assert np.all(np.isfinite(F)) and np.abs(F - [1, 0, 0, 1]).max() > 1e-3


def test_output_dir_precedence(monkeypatch):
    cfg = small_king()
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    assert resolve_output_dir(cfg) == cfg.output.directory
    monkeypatch.setenv(OUTPUT_DIR_ENV, "/tmp/from_env")
    assert resolve_output_dir(cfg) == "/tmp/from_env"
    assert resolve_output_dir(cfg, "/tmp/cli") == "/tmp/cli"


def test_manufactured_scenarios_small():
    st = run_manufactured(setup_benchmark("mms_stokes", resolutions=(4, 8)))
    assert st.errors["velocity"][1] < st.errors["velocity"][0] / 4
    et = run_manufactured(setup_benchmark("mms_energy", resolution=8, steps=(4, 8)))
    assert et.errors["temperature"][1] < et.errors["temperature"][0]
    assert "order" in st.table()


def test_unknown_benchmark():
    with pytest.raises(ValueError):
        setup_benchmark("blankenbach")


def test_latent_pipe_rejects_supercritical_inflow():
    with pytest.raises(ValueError):
        setup_benchmark("latent_pipe", velocity=1e-9)


# ---------------------------------------------------------------- command line
def test_cli_bench_with_output_dir(tmp_path, capsys):
    assert main(["--output-dir", str(tmp_path), "bench", "arctan", "--resolution", "8"]) == 0
    assert (tmp_path / "statistics.csv").exists() and (tmp_path / "config.echo.cfg").exists()
    assert "Vrms=" in capsys.readouterr().out


def test_cli_env_override_and_run(tmp_path, monkeypatch, capsys):
    cfg = small_king(2, 4)
    cfg_path = tmp_path / "k.cfg"
    cfg_path.write_text(cfg.echo())
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env"))
    assert main(["run", str(cfg_path)]) == 0
    assert len(read_statistics(tmp_path / "env" / "statistics.csv")) == 2


def test_cli_echo_and_parameter_checks(capsys):
    assert main(["bench", "king", "--di", "0.5", "--formulation", "TALA", "--echo"]) == 0
    out = capsys.readouterr().out
    assert parse_config(out).material.parameters["Di"] == 0.5
    with pytest.raises(SystemExit):
        main(["bench", "sinker", "--di", "1"])
    with pytest.raises(SystemExit):
        main(["bench", "nonexistent"])
    with pytest.raises(SystemExit):
        main(["bench", "sinker", "--averaging", "median"])


def test_cli_mms_writes_table(tmp_path):
    cfg = setup_benchmark("mms_stokes", resolutions=(4, 8))
    path = tmp_path / "m.cfg"
    path.write_text(cfg.echo())
    assert main(["--output-dir", str(tmp_path / "o"), "run", str(path)]) == 0
    assert (tmp_path / "o" / "mms_stokes_Q1.txt").read_text().startswith("param")


def test_write_vtk_from_simulation(tmp_path):
    sim = Simulation(small_king(1, 4))
    sim.initial_solve()
    write_vtk(sim, tmp_path / "s.vtk")
    assert read_vtk_counts(tmp_path / "s.vtk") == (25, 16)
    assert os.path.getsize(tmp_path / "s.vtk") > 0
