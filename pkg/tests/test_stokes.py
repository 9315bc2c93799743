import numpy as np
import pytest
import scipy.sparse as sp

from mantlefem.material import make_outputs
from mantlefem.mesh import create_rectangle
from mantlefem.stokes import (FormulationConfig, SolverConfig, StokesDiscretization, assemble_stokes,
                              compressibility_coefficient, compute_delta_correction, normalize_pressure,
                              picard_compressible, solve_stokes)
from mantlefem.fem import evaluate_at_points, field_at_quadrature

DIRECT = SolverConfig(method="direct")
GMRES = SolverConfig(method="gmres", rtol=1e-10)


def box(n=4, boundary=None, pressure="Q1", refine_corner=False):
    mesh = create_rectangle(((0.0, 1.0), (0.0, 1.0)), (n, n))
    if refine_corner:
        origin, _ = mesh.cell_geometry()
        mesh = mesh.execute_refinement((origin[:, 0] < 0.3) & (origin[:, 1] < 0.3))
    return StokesDiscretization(mesh, pressure, boundary)


def gravity(disc, g=1.0):
    pts = disc.qd.points
    out = np.zeros(pts.shape)
    out[..., 1] = -g
    return out


def blob_outputs(disc, contrast=1.0):
    pts = disc.qd.points
    inside = (pts[..., 0] - 0.5) ** 2 + (pts[..., 1] - 0.5) ** 2 < 0.2 ** 2
    return make_outputs(pts.shape[:2], viscosity=np.where(inside, contrast, 1.0),
                        density=np.where(inside, 2.0, 1.0))


@pytest.mark.parametrize("pressure", ["Q1", "P-1"])
@pytest.mark.parametrize("refine", [False, True])
def test_hydrostatic_state_is_exact(pressure, refine):
    disc = box(4, pressure=pressure, refine_corner=refine)
    out = make_outputs(disc.qd.points.shape[:2], density=3.0)
    system = assemble_stokes(disc, out, FormulationConfig("BA"), gravity(disc, 2.0))
    u, p, _ = solve_stokes(system, DIRECT)
    assert np.max(np.abs(u)) < 1e-10
    pts = np.array([[0.1, 0.2], [0.7, 0.9], [0.5, 0.5]])
    vals = evaluate_at_points(p, disc.pressure, pts)[0][:, 0]
    np.testing.assert_allclose(vals, 6.0 * (0.5 - pts[:, 1]), atol=1e-10)


@pytest.mark.parametrize("pressure", ["Q1", "P-1"])
def test_direct_and_gmres_agree(pressure):
    disc = box(6, {s: "free_slip" for s in ("left", "right", "bottom", "top")}, pressure)
    system = assemble_stokes(disc, blob_outputs(disc, 100.0), FormulationConfig("BA"), gravity(disc))
    u1, p1, r1 = solve_stokes(system, DIRECT)
    u2, p2, r2 = solve_stokes(system, GMRES)
    assert r2.outer_iterations > 1 and r2.inner_A_iterations > 0 and r2.inner_S_iterations > 0
    np.testing.assert_allclose(u2, u1, atol=1e-7 * np.abs(u1).max())
    np.testing.assert_allclose(p2, p1, atol=1e-7 * np.abs(p1).max())
    assert system.residual_norm(u1, p1) < 1e-10


@pytest.mark.parametrize("inner", ["amg", "ilu", "ssor", "direct"])
def test_inner_preconditioners_converge(inner):
    disc = box(4, refine_corner=True)
    system = assemble_stokes(disc, blob_outputs(disc, 10.0), FormulationConfig("BA"), gravity(disc))
    ref, _, _ = solve_stokes(system, DIRECT)
    u, _, rep = solve_stokes(system, SolverConfig(rtol=1e-10, inner_preconditioner=inner))
    assert rep.converged
    np.testing.assert_allclose(u, ref, atol=1e-7 * np.abs(ref).max())


def test_free_slip_has_no_normal_flow_and_divergence_free():
    disc = box(6, {s: "free_slip" for s in ("left", "right", "bottom", "top")})
    system = assemble_stokes(disc, blob_outputs(disc), FormulationConfig("BA"), gravity(disc))
    u, p, _ = solve_stokes(system, DIRECT)
    V = disc.velocity
    nn = V.n_nodes
    for side, comp in (("left", 0), ("right", 0), ("bottom", 1), ("top", 1)):
        assert np.all(u[V.boundary_nodes(side) + comp * nn] == 0.0)
    # tangential slip is allowed
    assert np.max(np.abs(u[V.boundary_nodes("top")])) > 1e-4
    # weak incompressibility: B u = 0 against every pressure test function
    assert np.max(np.abs(system.B @ u)) < 1e-10 * np.abs(u).max()


def test_pressure_scaling_does_not_change_solution():
    disc = box(4)
    out = make_outputs(disc.qd.points.shape[:2], viscosity=1e-3, density=1.0)
    system = assemble_stokes(disc, out, FormulationConfig("BA"), gravity(disc))
    assert system.pressure_scale(True) == pytest.approx(1e-3)
    u1, p1, _ = solve_stokes(system, SolverConfig(method="direct", pressure_scaling=True))
    u2, p2, _ = solve_stokes(system, SolverConfig(method="direct", pressure_scaling=False))
    np.testing.assert_allclose(u1, u2, atol=1e-10)
    np.testing.assert_allclose(p1, p2, atol=1e-10)


def test_viscous_block_is_symmetric_and_rigid_modes_in_kernel():
    disc = box(3)
    for approx in ("BA", "ALA"):
        form = FormulationConfig(approx, "implicit" if approx != "BA" else "incompressible")
        out = make_outputs(disc.qd.points.shape[:2], viscosity=2.0)
        A = assemble_stokes(disc, out, form, gravity(disc)).A
        assert abs(A - A.T).max() < 1e-12
        V = disc.velocity
        x, y = V.node_points[:, 0], V.node_points[:, 1]
        for mode in (np.r_[np.ones_like(x), 0 * x], np.r_[0 * x, np.ones_like(x)], np.r_[-y, x]):
            assert np.abs(A @ mode).max() < 1e-11


def test_deviatoric_term_removes_isotropic_expansion_energy():
    # u = (x, y): eps = I, div u = 2; tau = 2 eta (I - 2/3 I) for compressible
    disc = box(2)
    V = disc.velocity
    u = np.r_[V.node_points[:, 0], V.node_points[:, 1]]
    out = make_outputs(disc.qd.points.shape[:2], viscosity=1.0)
    A_inc = assemble_stokes(disc, out, FormulationConfig("BA"), gravity(disc)).A
    A_cmp = assemble_stokes(disc, out, FormulationConfig("TALA", "implicit"), gravity(disc)).A
    assert u @ A_inc @ u == pytest.approx(2 * 2.0)  # 2 eta eps:eps * area
    assert u @ A_cmp @ u == pytest.approx(2 * (2.0 - 4.0 / 3.0))


def test_compressibility_coefficient_from_reference_profile():
    shape = (2, 3)
    grad = np.zeros(shape + (2,))
    grad[..., 1] = -0.5
    out = make_outputs(shape, reference_density=2.0, reference_density_gradient=grad)
    g = np.zeros(shape + (2,))
    kappa = compressibility_coefficient(out, FormulationConfig("ALA", "implicit"), g)
    np.testing.assert_allclose(kappa[..., 1], -0.25)
    assert compressibility_coefficient(out, FormulationConfig("BA"), g) is None
    # 'previous' profile: (drho/dp) g + (drho/dT)/rho grad T
    out2 = make_outputs(shape, compressibility=0.1, thermal_density_derivative=-0.2, density=2.0)
    g[..., 1] = -10.0
    gradT = np.ones(shape + (2,))
    kappa2 = compressibility_coefficient(out2, FormulationConfig("ALA", "implicit", "previous"), g, gradT)
    np.testing.assert_allclose(kappa2[..., 0], -0.1)
    np.testing.assert_allclose(kappa2[..., 1], -1.0 - 0.1)


def compressible_outputs(disc, c=2.0):
    pts = disc.qd.points
    rho = np.exp(c * (1 - pts[..., 1]))
    grad = np.zeros(pts.shape)
    grad[..., 1] = -c * rho
    return make_outputs(pts.shape[:2], density=rho, reference_density=rho, reference_density_gradient=grad)


def inflow_boundary():
    return {"top": lambda x, y: (0.0 * x, -np.sin(np.pi * x)), "left": "free_slip", "right": "free_slip",
            "bottom": "free_slip"}


@pytest.mark.parametrize("pressure", ["Q1", "P-1"])
def test_delta_restores_compatibility(pressure):
    disc = box(5, inflow_boundary(), pressure, refine_corner=True)
    out = compressible_outputs(disc)
    rng = np.random.default_rng(0)
    u_star = rng.standard_normal(disc.n_velocity)
    system = assemble_stokes(disc, out, FormulationConfig("TALA", "explicit"), gravity(disc), u_star=u_star)
    ones = disc.pressure.constant_vector()
    before = ones @ system.mass_row_rhs()
    delta = compute_delta_correction(system)
    rhs = system.mass_row_rhs()
    assert abs(before) > 1e-3
    assert delta != 0.0
    assert abs(ones @ rhs) < 1e-12 * np.abs(rhs).sum()
    u, p, _ = solve_stokes(system, DIRECT)
    assert system.residual_norm(u, p) < 1e-9


@pytest.mark.parametrize("walls", ["no_slip", "free_slip"])
def test_delta_is_exactly_zero_for_incompressible_material(walls):
    disc = box(4, {s: walls for s in ("left", "right", "bottom", "top")}, refine_corner=True)
    out = make_outputs(disc.qd.points.shape[:2])  # zero density derivatives
    form = FormulationConfig("TALA", "explicit", "previous")
    u_star = np.random.default_rng(1).standard_normal(disc.n_velocity)
    system = assemble_stokes(disc, out, form, gravity(disc), u_star=u_star,
                             temperature_gradient=np.ones(disc.qd.points.shape))
    assert compute_delta_correction(system) == 0.0
    assert system.delta == 0.0


def test_delta_is_roundoff_for_tangential_boundary_motion():
    disc = box(4, {"top": lambda x, y: (np.sin(np.pi * x), 0.0 * x)})
    out = make_outputs(disc.qd.points.shape[:2])
    system = assemble_stokes(disc, out, FormulationConfig("TALA", "explicit", "previous"), gravity(disc),
                             u_star=np.zeros(disc.n_velocity),
                             temperature_gradient=np.ones(disc.qd.points.shape))
    assert abs(compute_delta_correction(system)) < 1e-15


def test_delta_not_applied_to_open_domains():
    disc = box(3, {"bottom": "open", "top": lambda x, y: (0 * x, -1 + 0 * x)})
    out = compressible_outputs(disc)
    system = assemble_stokes(disc, out, FormulationConfig("ALA", "explicit"), gravity(disc),
                             u_star=np.zeros(disc.n_velocity))
    assert compute_delta_correction(system) == 0.0


def test_implicit_equals_converged_picard():
    disc = box(4, {"top": lambda x, y: (0 * x, -1 + 0 * x), "bottom": "open", "left": "free_slip",
                   "right": "free_slip"})
    out = compressible_outputs(disc, 1.0)
    g = gravity(disc)
    implicit = assemble_stokes(disc, out, FormulationConfig("TALA", "implicit"), g)
    ui, pi, _ = solve_stokes(implicit, DIRECT)
    form = FormulationConfig("TALA", "explicit")
    res = picard_compressible(lambda us: assemble_stokes(disc, out, form, g, u_star=us),
                              lambda s: solve_stokes(s, DIRECT), np.zeros(disc.n_velocity), tol=1e-10)
    assert res.iterations > 2
    assert np.all(np.diff(res.residuals[:3]) < 0)
    assert res.updates[-1] < 1e-10
    np.testing.assert_allclose(res.u, ui, atol=1e-8 * np.abs(ui).max())
    assert res.system is not None


def test_implicit_matrix_is_nonsymmetric_explicit_is_not():
    disc = box(3, {"top": lambda x, y: (0 * x, -1 + 0 * x), "bottom": "open"})
    out = compressible_outputs(disc)
    imp = assemble_stokes(disc, out, FormulationConfig("TALA", "implicit"), gravity(disc))
    exp = assemble_stokes(disc, out, FormulationConfig("TALA", "explicit"), gravity(disc),
                          u_star=np.zeros(disc.n_velocity))
    assert not imp.symmetric and exp.symmetric
    K = exp.reduced(False)["K"]
    assert abs(K - K.T).max() < 1e-12


def test_solve_returns_zero_mean_pressure_in_closed_box():
    disc = box(4, refine_corner=True)
    system = assemble_stokes(disc, blob_outputs(disc), FormulationConfig("BA"), gravity(disc))
    _, p, _ = solve_stokes(system, GMRES)
    pq = field_at_quadrature(disc.pressure, p, disc.qd, gradients=False)[..., 0]
    assert abs(np.sum(pq * disc.qd.JxW)) < 1e-12


def test_surface_normalization():
    disc = box(4)
    p = disc.pressure.node_points[:, 1] * 3.0 + 1.0
    q = normalize_pressure(p, disc, "surface")
    top = disc.pressure.boundary_nodes("top")
    np.testing.assert_allclose(q[top], 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        normalize_pressure(p, disc, "median")


def test_formulation_validation():
    with pytest.raises(ValueError):
        FormulationConfig("XYZ")
    with pytest.raises(ValueError):
        FormulationConfig("ALA", "sometimes")
    assert FormulationConfig("BA", "implicit").mass_strategy == "incompressible"


def test_unknown_boundary_side():
    mesh = create_rectangle(((0.0, 1.0), (0.0, 1.0)), (2, 2))
    with pytest.raises(ValueError):
        StokesDiscretization(mesh, boundary={"front": "no_slip"})
