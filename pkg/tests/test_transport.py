import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm, sqrtm

from mantlefem.fem import CellQuadrature, FunctionSpace, evaluate_at_points, interpolate
from mantlefem.mesh import create_rectangle
from mantlefem.transport import (advance_composition, advance_finite_strain, finite_strain_source,
                                 natural_strain, polar_decompose, strain_from_fields, symmetric_eigen)


def unit_setup(n=4):
    mesh = create_rectangle(((0.0, 1.0), (0.0, 1.0)), (n, n))
    return FunctionSpace(mesh, "Q2", 1), CellQuadrature(mesh)


def integrate_F(G, t_end, n_steps, n=2):
    """Uniform velocity gradient ``G``; returns F at the cell-0 centre after ``n_steps``."""
    space, qd = unit_setup(n)
    c = np.array([0.5, 0.5])
    pts = qd.points - c
    uq = np.einsum("ij,cqj->cqi", G, pts)
    Gq = np.broadcast_to(G, qd.points.shape[:2] + (2, 2))
    hist = [[interpolate(lambda x, y, v=v: v + 0 * x, space)] for v in (1.0, 0.0, 0.0, 1.0)]
    dt = t_end / n_steps
    prev = None
    for _ in range(n_steps):
        new = advance_finite_strain(space, qd, hist, uq, Gq, dt, prev)
        hist = [[nv] + h[:1] for nv, h in zip(new, hist)]
        prev = dt
    vals = [evaluate_at_points(h[0], space, np.array([[0.3, 0.6]]))[0][0, 0] for h in hist]
    return np.array(vals).reshape(2, 2)


def test_finite_strain_source():
    G = np.array([[0.0, 1.0], [0.0, 0.0]])
    np.testing.assert_allclose(finite_strain_source(G, np.eye(2), 0.5), 0.5 * G)


def test_pure_shear_second_order():
    G = np.diag([1.0, -1.0])
    t = 0.5
    errs = []
    for n in (10, 20, 40):
        F = integrate_F(G, t, n)
        s, _, _ = natural_strain(polar_decompose(F)[0])
        errs.append(abs(s - 2 * t))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.4) & (ratios < 4.6)), (errs, ratios)


def test_simple_shear_matches_matrix_exponential():
    G = np.array([[0.0, 1.0], [0.0, 0.0]])
    F = integrate_F(G, 1.0, 40)
    np.testing.assert_allclose(F, expm(G), atol=1e-10)  # exact: polynomial in t of degree 1


def test_rigid_rotation_has_no_strain():
    G = np.array([[0.0, -1.0], [1.0, 0.0]])
    F = integrate_F(G, 1.0, 20)
    s, _, _ = natural_strain(polar_decompose(F)[0])
    assert abs(s) < 1e-6


def _random_F(seed):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((2, 2)) + 2 * np.eye(2)
    if np.linalg.det(F) <= 0:
        F[:, 0] *= -1
    return F


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_polar_decomposition(seed):
    F = _random_F(seed)
    L, R = polar_decompose(F)
    assert np.linalg.norm(L @ L.T - F @ F.T) < 1e-12 * max(1.0, np.linalg.norm(F) ** 2)
    np.testing.assert_allclose(R @ R.T, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(L @ R, F, atol=1e-12)
    np.testing.assert_allclose(L, L.T, atol=1e-14)
    np.testing.assert_allclose(L, np.real(sqrtm(F @ F.T)), atol=1e-10)


def test_polar_rejects_reflections():
    with pytest.raises(ValueError):
        polar_decompose(np.diag([1.0, -1.0]))


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0, np.pi))
def test_eigen_of_rotated_diagonal(a, b, theta):
    c, s = np.cos(theta), np.sin(theta)
    Q = np.array([[c, -s], [s, c]])
    L = Q @ np.diag([a, b]) @ Q.T
    lam1, lam2, e1, e2 = symmetric_eigen(L)
    assert lam1 == pytest.approx(max(a, b)) and lam2 == pytest.approx(min(a, b))
    np.testing.assert_allclose(L @ e1, lam1 * e1, atol=1e-10 * max(a, b))
    assert abs(e1 @ e2) < 1e-12


def test_natural_strain_and_glyphs():
    strain, g1, g2 = strain_from_fields(np.array([[np.e, 0.0, 0.0, 1.0 / np.e]]))
    assert strain[0] == pytest.approx(2.0)
    np.testing.assert_allclose(g1[0], [np.e, 0.0])
    np.testing.assert_allclose(np.abs(g2[0]), [0.0, 1.0 / np.e])
    assert strain_from_fields(np.array([[1.0, 0.0, 0.0, 1.0]]))[0][0] == 0.0


def test_strain_output_marks_inverted_F():
    strain, g1, _ = strain_from_fields(np.array([[1.0, 0.0, 0.0, 1.0], [1.0, 2.0, 2.0, 1.0]]))
    assert strain[0] == 0.0 and np.isnan(strain[1]) and np.all(np.isnan(g1[1]))


def translate_gaussian(n, stabilization):
    space, qd = unit_setup(n)
    u = np.zeros(qd.points.shape)
    u[..., 0] = 1.0
    f0 = lambda x, y: np.exp(-((x - 0.3) ** 2 + (y - 0.5) ** 2) / 0.01)  # noqa: E731
    hist = [interpolate(f0, space)]
    dt, prev = 0.16 / n, None
    for _ in range(int(round(0.2 / dt))):
        hist = [advance_composition(space, qd, [hist[:2]], u, dt, prev, stabilization=stabilization)[0]] + hist[:1]
        prev = dt
    pts = np.array([[0.5, 0.5], [0.4, 0.55], [0.6, 0.45]])
    got = evaluate_at_points(hist[0], space, pts)[0][:, 0]
    return np.max(np.abs(got - f0(pts[:, 0] - 0.2, pts[:, 1])))


def test_uniform_translation_of_composition():
    assert translate_gaussian(16, False) < 0.02


def test_artificial_diffusion_vanishes_under_refinement():
    e16, e32 = translate_gaussian(16, True), translate_gaussian(32, True)
    assert e32 < e16 / 3


def test_composition_source_increment_is_impulse():
    space, qd = unit_setup(2)
    inc = np.full(qd.JxW.shape, 0.25)
    out = advance_composition(space, qd, [[np.zeros(space.n_dofs)]], None, 0.1, None, [inc],
                              stabilization=False)[0]
    np.testing.assert_allclose(out, 0.25, atol=1e-12)
