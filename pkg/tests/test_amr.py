import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mantlefem.amr import (IndicatorField, RegionRule, cell_gradients, combine, depth_band,
                           gradient_indicator, kelly_indicator, mark_cells, transfer_solution)
from mantlefem.fem import FunctionSpace, evaluate_at_points, interpolate
from mantlefem.mesh import create_rectangle


def unit(n):
    return create_rectangle(((0.0, 1.0), (0.0, 1.0)), (n, n))


def adapted_mesh(seed=0, cycles=3):
    rng = np.random.default_rng(seed)
    m = unit(4)
    for _ in range(cycles):
        m = m.execute_refinement(rng.random(m.n_active) < 0.3)
    return m


@pytest.mark.parametrize("degree", [1, 2])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_kelly_vanishes_on_linear_fields(degree, seed):
    mesh = adapted_mesh(seed)
    space = FunctionSpace(mesh, f"Q{degree}", 1)
    v = interpolate(lambda x, y: 3 * x - 2 * y + 1, space)
    ind = kelly_indicator(space, v)
    assert len(ind) == mesh.n_active
    assert np.max(ind.values) < 1e-12


def test_kelly_detects_kinks():
    mesh = unit(8)
    space = FunctionSpace(mesh, "Q1", 1)
    v = interpolate(lambda x, y: np.abs(x - 0.5) + 0 * y, space)
    ind = kelly_indicator(space, v).values
    centers = mesh.cell_centers()
    near = np.abs(centers[:, 0] - 0.5) < 0.1
    assert np.all(ind[near] > 0.1) and np.all(ind[~near] < 1e-12)


def test_kelly_jump_value_on_two_cells():
    # v = |x - 1/2| on two cells: normal-gradient jump 2 along a unit-length face
    mesh = create_rectangle(((0.0, 1.0), (0.0, 0.5)), (2, 1))
    space = FunctionSpace(mesh, "Q1", 1)
    v = interpolate(lambda x, y: np.abs(x - 0.5) + 0 * y, space)
    ind = kelly_indicator(space, v).values
    diam = np.hypot(0.5, 0.5)
    np.testing.assert_allclose(ind, np.sqrt(diam * 4 * 0.5))


def test_gradient_indicator_linear_field():
    mesh = adapted_mesh(3)
    g = cell_gradients(lambda_values := 2 * mesh.cell_centers()[:, 0] - mesh.cell_centers()[:, 1], mesh)
    np.testing.assert_allclose(g, np.tile([2.0, -1.0], (mesh.n_active, 1)), atol=1e-10)
    ind = gradient_indicator(lambda x, y: 2 * x - y, mesh)
    h = np.sqrt(np.prod(mesh.cell_geometry()[1], axis=1))
    np.testing.assert_allclose(ind.values, h ** 2 * np.sqrt(5.0), rtol=1e-10)
    assert lambda_values is not None


def test_indicator_must_be_nonnegative():
    with pytest.raises(ValueError):
        IndicatorField(np.array([1.0, -1.0]))


def test_combine_scalings_and_modes():
    a = IndicatorField(np.array([1.0, 2.0, 4.0]), "a")
    b = IndicatorField(np.array([30.0, 10.0, 20.0]), "b")
    np.testing.assert_allclose(combine([a, b], "max", "max").values, [1.0, 0.5, 1.0])
    np.testing.assert_allclose(combine([a, b], "range", "sum").values, [1.0, 1 / 3, 1.5])
    np.testing.assert_allclose(combine([a, b], "none", "sum", [2.0, 0.1]).values, [5.0, 5.0, 10.0])
    assert combine([a, b]).label == "max(a,b)"
    with pytest.raises(ValueError):
        combine([a, IndicatorField(np.ones(2))])
    with pytest.raises(ValueError):
        combine([a], "log")


def test_mark_counts_and_ties():
    mesh = unit(2).refine_global(1)
    v = np.ones(16)
    v[[3, 7]] = 5.0
    v[[12, 13]] = 0.5
    refine, coarsen = mark_cells(v, mesh, refine_fraction=0.25, coarsen_fraction=0.25)
    assert refine.sum() == 4 and coarsen.sum() == 4
    assert np.flatnonzero(refine).tolist() == [0, 1, 3, 7]
    assert np.flatnonzero(coarsen).tolist() == [2, 4, 12, 13]
    # coarse-grid cells (level 0) are never coarsened
    assert not mark_cells(v, unit(4), 0.0, 0.5)[1].any()


def test_mark_validation():
    mesh = unit(2)
    with pytest.raises(ValueError):
        mark_cells(np.ones(3), mesh, 0.1)
    with pytest.raises(ValueError):
        mark_cells(np.ones(4), mesh, 0.7, 0.5)
    with pytest.raises(ValueError):
        mark_cells(np.ones(4), mesh, -0.1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 0.5), st.floats(0, 0.5))
def test_mark_respects_level_limits(seed, rf, cf):
    mesh = adapted_mesh(seed % 100, 2)
    v = np.random.default_rng(seed).random(mesh.n_active)
    level = mesh.active_levels()
    refine, coarsen = mark_cells(v, mesh, rf, cf, min_level=2, max_level=3)
    assert not np.any(refine & coarsen)
    assert np.all(level[refine] < 3)
    assert np.all(level[coarsen] > 2)
    assert np.all(refine[level < 2])


def test_region_rule_reaches_min_level_after_two_cycles():
    mesh = unit(4)  # level 0 on a 4x4 coarse grid
    L = 2
    rule = RegionRule(depth_band(mesh, 0.2, 0.4), L)
    for _ in range(2):
        v = np.random.default_rng(0).random(mesh.n_active)
        refine, coarsen = mark_cells(v, mesh, 0.1, 0.1, regions=[rule])
        mesh = mesh.execute_refinement(refine, coarsen)
        assert mesh.is_balanced()
    origin, h = mesh.cell_geometry()
    hit = rule.predicate(origin[:, 0], origin[:, 0] + h[:, 0], origin[:, 1], origin[:, 1] + h[:, 1])
    assert hit.any()
    assert np.all(mesh.active_levels()[hit] >= L)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_balance_after_every_adapt(seed):
    rng = np.random.default_rng(seed)
    mesh = unit(2)
    for _ in range(5):
        v = rng.random(mesh.n_active) ** 4
        refine, coarsen = mark_cells(v, mesh, 0.3, 0.3, max_level=5)
        mesh = mesh.execute_refinement(refine, coarsen)
        assert mesh.is_balanced()
        assert np.all(np.abs(mesh.edge_level_differences()) <= 1)


@pytest.mark.parametrize("element", ["Q1", "Q2", "P-1"])
def test_transfer_exact_on_refinement(element):
    coarse = adapted_mesh(5, 2)
    fine = coarse.execute_refinement(np.random.default_rng(1).random(coarse.n_active) < 0.5)
    f = lambda x, y: 1 + x - 2 * y + 0.5 * x * y  # noqa: E731
    V0 = FunctionSpace(coarse, element, 1)
    V1 = FunctionSpace(fine, element, 1)
    v0 = interpolate(f, V0)
    v1 = transfer_solution(V0, v0, V1)
    pts = np.random.default_rng(2).random((30, 2))
    np.testing.assert_allclose(evaluate_at_points(v1, V1, pts)[0][:, 0],
                               evaluate_at_points(v0, V0, pts)[0][:, 0], atol=1e-12)


def test_transfer_vector_field_and_coarsening():
    fine = unit(4).refine_global(1)
    coarse = fine.execute_refinement(None, np.ones(fine.n_active, bool))
    assert coarse.n_active == 16
    V1 = FunctionSpace(fine, "Q2", 2)
    V0 = FunctionSpace(coarse, "Q2", 2)
    f = lambda x, y: [x * x, 1 - y]  # noqa: E731
    out = transfer_solution(V1, interpolate(f, V1), V0)
    np.testing.assert_allclose(out, interpolate(f, V0), atol=1e-12)
