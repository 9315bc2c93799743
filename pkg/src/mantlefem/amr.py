"""Refinement indicators, their combination, cell marking and solution transfer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import AffineConstraints, FunctionSpace, evaluate_at_points, gauss_1d, interpolate
from .fem.assembly import local_coefficients


@dataclass
class IndicatorField:
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values < 0):
            raise ValueError("indicators must be nonnegative")

    def __len__(self):
        return len(self.values)


def _face_pairs(mesh):
    rows = []
    for k, faces in enumerate(mesh.neighbors()):
        for f, nbrs in enumerate(faces):
            for n in nbrs:
                rows.append((k, n, f))
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def _grad_in_cell(space, vec, cells, points):
    """Gradients ``(npts, ncomp, 2)`` of the field restricted to the given cells."""
    origin, h = space.mesh.cell_geometry()
    ref = np.clip((points - origin[cells]) / h[cells], 0.0, 1.0)
    g = space.element.grads(ref)  # (npts, nl, 2)
    coef = local_coefficients(space, vec)[cells]
    return np.einsum("pad,pka->pkd", g, coef) / h[cells][:, None, :]


def kelly_indicator(space: FunctionSpace, vec, mesh=None, label="kelly") -> IndicatorField:
    """``eta_K = (h_K int_dK |[n . grad v]|^2)^(1/2)`` with ``h_K`` the cell diameter.

    Faces shared with a refined neighbour are integrated piecewise over the
    finer sub-faces; boundary faces carry no jump.
    """
    mesh = space.mesh if mesh is None else mesh
    pairs = _face_pairs(mesh)
    n_act = mesh.n_active
    origin, h = mesh.cell_geometry()
    diam = np.hypot(h[:, 0], h[:, 1])
    if len(pairs) == 0:
        return IndicatorField(np.zeros(n_act), label)
    k, n, f = pairs.T
    lo_k, hi_k = origin[k], origin[k] + h[k]
    lo_n, hi_n = origin[n], origin[n] + h[n]
    normal_axis = np.where(f < 2, 0, 1)
    tangent_axis = 1 - normal_axis
    idx = np.arange(len(pairs))
    t0 = np.maximum(lo_k[idx, tangent_axis], lo_n[idx, tangent_axis])
    t1 = np.minimum(hi_k[idx, tangent_axis], hi_n[idx, tangent_axis])
    pos = np.where(f % 2 == 0, lo_k[idx, normal_axis], hi_k[idx, normal_axis])
    gp, gw = gauss_1d(3)
    npts = len(gp)
    tpts = t0[:, None] + (t1 - t0)[:, None] * gp[None, :]
    pts = np.zeros((len(pairs), npts, 2))
    pts[idx, :, normal_axis] = pos[:, None]
    pts[idx, :, tangent_axis] = tpts
    flat = pts.reshape(-1, 2)
    gk = _grad_in_cell(space, vec, np.repeat(k, npts), flat)
    gn = _grad_in_cell(space, vec, np.repeat(n, npts), flat)
    nvec = np.zeros((len(pairs), 2))
    nvec[idx, normal_axis] = np.where(f % 2 == 0, -1.0, 1.0)
    jump = np.einsum("pkd,pd->pk", gk - gn, np.repeat(nvec, npts, axis=0))
    sq = np.sum(jump ** 2, axis=1).reshape(len(pairs), npts)
    integral = (sq * gw[None, :]).sum(axis=1) * (t1 - t0)
    total = np.bincount(k, weights=integral, minlength=n_act)
    return IndicatorField(np.sqrt(diam * total), label)


def cell_gradients(center_values, mesh):
    """Least-squares gradient at cell centres from edge-neighbour centre values."""
    v = np.asarray(center_values, dtype=float)
    centers = mesh.cell_centers()
    grads = np.zeros((mesh.n_active, 2))
    for c, faces in enumerate(mesh.neighbors()):
        nb = [m for face in faces for m in face if m >= 0]
        if not nb:
            continue
        Y = centers[nb] - centers[c]
        dv = v[nb] - v[c]
        grads[c] = np.linalg.lstsq(Y, dv, rcond=None)[0]
    return grads


def gradient_indicator(center_values, mesh, d=2, label="gradient") -> IndicatorField:
    """``eta_K = h_K^(1 + d/2) |grad_h v(x_K)|`` with ``h_K = sqrt(|K|)``.

    ``center_values`` may also be a callable evaluated at the cell centres.
    """
    if callable(center_values):
        c = mesh.cell_centers()
        center_values = center_values(c[:, 0], c[:, 1])
    g = cell_gradients(center_values, mesh)
    h = mesh.size_measure("sqrt_area")
    return IndicatorField(h ** (1 + d / 2) * np.linalg.norm(g, axis=1), label)


def combine(indicators, scaling="max", mode="max", weights=None) -> IndicatorField:
    """Scale each indicator and combine them cellwise by ``max`` or ``sum``.

    ``scaling`` (one value or one per indicator): ``'none'`` (multiply by the
    weight), ``'max'`` (divide by the maximum) or ``'range'`` (affine map to
    ``[0, 1]``).  Weights multiply after scaling.
    """
    vals = [ind.values if isinstance(ind, IndicatorField) else np.asarray(ind, dtype=float)
            for ind in indicators]
    if len({len(v) for v in vals}) > 1:
        raise ValueError("indicator lengths differ")
    if isinstance(scaling, str):
        scaling = [scaling] * len(vals)
    weights = [1.0] * len(vals) if weights is None else list(weights)
    scaled = []
    for v, s, w in zip(vals, scaling, weights):
        if s == "none":
            out = v.copy()
        elif s == "max":
            m = v.max() if len(v) else 0.0
            out = v / m if m > 0 else np.zeros_like(v)
        elif s == "range":
            lo, hi = v.min(), v.max()
            out = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
        else:
            raise ValueError(f"unknown scaling {s!r}")
        scaled.append(w * out)
    stack = np.vstack(scaled)
    if mode == "max":
        res = stack.max(axis=0)
    elif mode == "sum":
        res = stack.sum(axis=0)
    else:
        raise ValueError(f"unknown combination mode {mode!r}")
    labels = [ind.label for ind in indicators if isinstance(ind, IndicatorField)]
    return IndicatorField(res, f"{mode}(" + ",".join(labels) + ")")


@dataclass
class RegionRule:
    """Cells intersecting the region get at least ``min_level``.

    ``predicate(x0, x1, y0, y1)`` receives cell bounding boxes (arrays) and
    returns a boolean mask of intersecting cells.
    """

    predicate: object
    min_level: int


def depth_band(mesh, depth_min, depth_max):
    """Predicate for cells intersecting ``depth_min <= y_top - y <= depth_max``."""
    top = mesh.extents[1][1]

    def pred(x0, x1, y0, y1):
        return (top - y0 >= depth_min) & (top - y1 <= depth_max)
    return pred


def mark_cells(indicator, mesh, refine_fraction=0.0, coarsen_fraction=0.0, min_level=0,
               max_level=None, regions=()):
    """Count-based marking; returns ``(refine, coarsen)`` boolean flags.

    The ``floor(refine_fraction * n)`` largest indicators are refined and the
    ``floor(coarsen_fraction * n)`` smallest coarsened; ties are broken by the
    lowest cell index.  Level limits and region rules then override.
    """
    v = indicator.values if isinstance(indicator, IndicatorField) else np.asarray(indicator, float)
    n = len(v)
    if n != mesh.n_active:
        raise ValueError("indicator length does not match the mesh")
    if not (0 <= refine_fraction <= 1 and 0 <= coarsen_fraction <= 1):
        raise ValueError("fractions must lie in [0, 1]")
    if refine_fraction + coarsen_fraction > 1 + 1e-12:
        raise ValueError("refine and coarsen fractions cover more than all cells")
    idx = np.arange(n)
    n_ref = int(np.floor(refine_fraction * n + 1e-9))
    n_coa = int(np.floor(coarsen_fraction * n + 1e-9))
    refine = np.zeros(n, dtype=bool)
    coarsen = np.zeros(n, dtype=bool)
    refine[np.lexsort((idx, -v))[:n_ref]] = True
    order = [c for c in np.lexsort((idx, v)) if not refine[c]]
    coarsen[np.array(order[:n_coa], dtype=np.int64)] = True
    level = mesh.active_levels()
    required = np.full(n, min_level)
    if regions:
        origin, h = mesh.cell_geometry()
        x0, y0 = origin[:, 0], origin[:, 1]
        x1, y1 = x0 + h[:, 0], y0 + h[:, 1]
        for rule in regions:
            hit = np.asarray(rule.predicate(x0, x1, y0, y1), dtype=bool)
            required = np.where(hit, np.maximum(required, rule.min_level), required)
    refine |= level < required
    coarsen &= level > required
    coarsen &= ~refine
    if max_level is not None:
        refine &= level < max_level
        coarsen |= level > max_level
    return refine, coarsen


def transfer_solution(old_space: FunctionSpace, vec, new_space: FunctionSpace):
    """Interpolate a field onto a new mesh (exact on refinement, nodal injection on coarsening)."""
    ncomp = old_space.n_components

    def f(x, y):
        vals = evaluate_at_points(vec, old_space, np.column_stack([x, y]))[0]
        return vals[:, 0] if ncomp == 1 else [vals[:, c] for c in range(ncomp)]

    new = interpolate(f, new_space)
    if new_space.element.continuous:
        new = AffineConstraints(new_space).apply(new)
    return new
