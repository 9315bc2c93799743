import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mantlefem import material as mat
from mantlefem.fem import quadrature_rule

REF, _ = quadrature_rule(5)
SCHEMES = ("arithmetic", "harmonic", "geometric", "max", "project_q1", "project_q1_limited")


def inputs_at(points, T=0.5, p=0.0):
    points = np.asarray(points, dtype=float).reshape(1, -1, 2)
    shape = points.shape[:2]
    return mat.MaterialInputs(points, np.full(shape, T), np.full(shape, p))


def test_king_constants():
    m = mat.KingModel(Di=0.25, Ra=1e4)
    out = mat.evaluate(m, inputs_at([[0.5, 0.5]]))
    assert m.alpha == 0.25
    assert m.eta == pytest.approx(2.5e-5)
    assert out.thermal_expansivity[0, 0] == 0.25
    assert out.viscosity[0, 0] == pytest.approx(2.5e-5)


def test_king_reference_profiles():
    m = mat.KingModel(Di=0.5, gamma=2.0, T_top=0.1)
    x = np.array([[0.3, 0.25]])  # depth 0.75
    assert m.reference_density(x)[0] == pytest.approx(np.exp(0.5 * 0.75 / 2.0))
    assert m.reference_temperature(x)[0] == pytest.approx(0.1 * np.exp(0.5 * 0.75))
    # gradient by finite differences (d/dy)
    e = 1e-6
    fd = (m.reference_density(x + [0, e]) - m.reference_density(x - [0, e])) / (2 * e)
    assert m.reference_density_gradient(x)[0, 1] == pytest.approx(fd[0], rel=1e-7)


def test_king_ala_pressure_term_vanishes_on_reference_pressure():
    m = mat.KingModel(Di=0.25, approximation="ALA")
    x = np.array([[[0.2, 0.4]]])
    pref = m.reference_pressure(x[0])
    T = m.reference_temperature(x[0])
    out = m.evaluate(mat.MaterialInputs(x, T[None], pref[None]))
    assert out.density[0, 0] == pytest.approx(m.reference_density(x[0])[0])


def test_sinker_inside_outside():
    m = mat.SinkerModel()
    out = mat.evaluate(m, inputs_at([[0.5, 0.5], [0.05, 0.05]]))
    np.testing.assert_allclose(out.density[0], [10.0, 1.0])
    np.testing.assert_allclose(out.viscosity[0], [1e6, 1.0])


def test_arctan_reference_density():
    m = mat.ArctanModel(c=0.0)
    assert m.reference_density(np.array([[0.1, 0.5]]))[0] == pytest.approx(1.6)
    m30 = mat.ArctanModel(c=30.0)
    x = np.array([[0.1, 0.2]])
    e = 1e-6
    fd = (m30.reference_density(x + [0, e]) - m30.reference_density(x - [0, e])) / (2 * e)
    assert m30.reference_density_gradient(x)[0, 1] == pytest.approx(fd[0], rel=1e-6)


def test_arctan_c0_has_zero_gradient():
    m = mat.ArctanModel(c=0.0)
    x = np.random.default_rng(0).random((5, 2))
    np.testing.assert_array_equal(m.reference_density_gradient(x), 0.0)


def test_output_validation_rejects_nonpositive_viscosity():
    out = mat.make_outputs((1, 2), viscosity=-1.0)
    with pytest.raises(ValueError):
        out.validate()


@pytest.mark.parametrize("values, scheme, expected", [
    ([1.0, 4.0], "harmonic", 1.6),
    ([1.0, 1e6], "geometric", 1e3),
    ([1.0, 1e6], "arithmetic", 500000.5),
    ([1.0, 1e6], "max", 1e6),
])
def test_average_cell_examples(values, scheme, expected):
    out = mat.average_cell(np.array([values]), scheme)
    np.testing.assert_allclose(out, expected, rtol=1e-12)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_average_constant_is_identity(scheme):
    v = np.full((3, len(REF)), 2.5)
    np.testing.assert_allclose(mat.average_cell(v, scheme, REF), 2.5, rtol=1e-12)


@pytest.mark.parametrize("scheme", ["harmonic", "geometric"])
def test_average_rejects_nonpositive(scheme):
    with pytest.raises(ValueError):
        mat.average_cell(np.array([[1.0, 0.0]]), scheme)


def test_unknown_scheme():
    with pytest.raises(ValueError):
        mat.average_cell(np.ones((1, 4)), "median")


def test_projection_reproduces_bilinear():
    f = 1 + 2 * REF[:, 0] - REF[:, 1] + 0.5 * REF[:, 0] * REF[:, 1]
    np.testing.assert_allclose(mat.average_cell(f[None], "project_q1", REF)[0], f, atol=1e-12)


positive_cells = arrays(np.float64, (4, 9), elements=st.floats(1e-3, 1e6))


@settings(max_examples=60, deadline=None)
@given(positive_cells)
def test_mean_ordering(v):
    h = mat.average_cell(v, "harmonic")[:, 0]
    g = mat.average_cell(v, "geometric")[:, 0]
    a = mat.average_cell(v, "arithmetic")[:, 0]
    m = mat.average_cell(v, "max")[:, 0]
    tol = 1e-9
    assert np.all(h <= g * (1 + tol)) and np.all(g <= a * (1 + tol)) and np.all(a <= m * (1 + tol))


@settings(max_examples=60, deadline=None)
@given(positive_cells, st.permutations(range(9)))
def test_means_permutation_invariant(v, perm):
    for s in ("arithmetic", "harmonic", "geometric", "max"):
        np.testing.assert_allclose(mat.average_cell(v, s), mat.average_cell(v[:, perm], s), rtol=1e-12)
    # projection: permuting values together with their locations changes nothing
    a = mat.average_cell(v, "project_q1", REF)
    b = mat.average_cell(v[:, perm], "project_q1", REF[list(perm)])
    np.testing.assert_allclose(a[:, list(perm)], b, rtol=1e-9, atol=1e-9 * np.abs(v).max())


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 9), elements=st.floats(-1e3, 1e3)))
def test_limited_projection_within_bounds(v):
    out = mat.average_cell(v, "project_q1_limited", REF)
    assert np.all(out >= v.min(axis=1, keepdims=True)) and np.all(out <= v.max(axis=1, keepdims=True))


def test_average_outputs_applies_to_all_fields():
    out = mat.make_outputs((2, len(REF)), viscosity=np.linspace(1, 2, 2 * len(REF)).reshape(2, -1),
                           density=np.linspace(3, 4, 2 * len(REF)).reshape(2, -1))
    avg = mat.average_outputs(out, "harmonic", REF)
    for name in ("viscosity", "density"):
        v = getattr(avg, name)
        np.testing.assert_allclose(v, v[:, :1].repeat(v.shape[1], axis=1))


def test_phase_function_values_and_derivatives():
    tr = mat.PhaseTransition(depth0=100.0, width=5.0, clapeyron=2.0, temperature0=10.0, density=3.0,
                             gravity=1.5)
    X, dXdT, dXdz = mat.phase_function(100.0, 10.0, tr)
    assert X == pytest.approx(0.5)
    assert dXdz == pytest.approx(1 / (2 * 5.0))
    assert mat.phase_function(1e4, 10.0, tr)[0] == pytest.approx(1.0)
    assert mat.phase_function(-1e4, 10.0, tr)[0] == pytest.approx(0.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(80, 120), st.floats(0, 20))
def test_phase_function_finite_differences(z, T):
    tr = mat.PhaseTransition(depth0=100.0, width=5.0, clapeyron=2.0, temperature0=10.0, density=3.0,
                             gravity=1.5)
    X, dXdT, dXdz = mat.phase_function(z, T, tr)
    e = 1e-4
    fz = (mat.phase_function(z + e, T, tr)[0] - mat.phase_function(z - e, T, tr)[0]) / (2 * e)
    fT = (mat.phase_function(z, T + e, tr)[0] - mat.phase_function(z, T - e, tr)[0]) / (2 * e)
    assert dXdz == pytest.approx(fz, rel=1e-6, abs=1e-12)
    assert dXdT == pytest.approx(fT, rel=1e-6, abs=1e-12)


def test_phase_width_must_be_positive():
    with pytest.raises(ValueError):
        mat.PhaseTransition(depth0=0.0, width=0.0)


def test_entropy_derivatives():
    assert mat.entropy_derivatives(4.0, 0.0, 1.0, 1.0, 2.0)[0] == pytest.approx(1.0)
    assert mat.entropy_derivatives(0.0, 3.0, 1.0, 1.0, 2.0)[0] == 0.0
    assert mat.entropy_derivatives(5.0, 3.0, 0.0, 1.0, 2.0) == (0.0, 0.0)
    with pytest.raises(ValueError):
        mat.entropy_derivatives(1.0, 1.0, 1.0, 1.0, 0.0)


def test_latent_model_entropy_change():
    tr = mat.PhaseTransition(depth0=1e5, width=5e3, clapeyron=3e6, density_jump=200.0, density=3400.0,
                             gravity=10.0)
    assert tr.entropy_change == pytest.approx(3e6 * 200 / 3400 ** 2)


def test_finite_strain_model_constants():
    m = mat.FiniteStrainModel()
    out = mat.evaluate(m, inputs_at([[0.0, 1e6]], T=1600.0))
    assert out.viscosity[0, 0] == pytest.approx(5e21)
    assert out.density[0, 0] == pytest.approx(3400.0)
    hot = mat.evaluate(m, inputs_at([[0.0, 1e6]], T=3200.0))
    assert hot.viscosity[0, 0] == pytest.approx(5e21 * np.exp(-7.0))


def test_layered_model_jumps_and_prefactors():
    m = mat.LayeredPhaseModel(compressibility_coefficient=0.0)
    pts = [[0.0, m.top - 100e3], [0.0, m.top - 500e3], [0.0, m.top - 1000e3]]
    out = mat.evaluate(m, inputs_at(pts, T=1600.0))
    np.testing.assert_allclose(out.viscosity[0], [1e21, 1e22, 1e23])
    np.testing.assert_allclose(out.density[0], [3300.0, 3400.0, 3600.0])


def test_viscosity_clamp():
    m = mat.ViscosityClamp(mat.SinkerModel(), 1e-2, 1e3)
    out = mat.evaluate(m, inputs_at([[0.5, 0.5], [0.0, 0.0]]))
    np.testing.assert_allclose(out.viscosity[0], [1e3, 1.0])
    assert m.top == 1.0
