"""Compositional-field advection and finite-strain tracking.

Compositional fields obey ``dC/dt + u . grad C = Q`` with no physical
diffusion; they are advanced with the same BDF-2 + artificial-viscosity
scheme as temperature.  Sources are supplied as time-integrated increments
``int_t^{t+dt} Q`` per quadrature point, which allows impulse-like sources.

Finite strain is tracked by four fields holding the deformation gradient
``F`` (``F_xx, F_xy, F_yx, F_yy``) with ``dF/dt = G F``, ``G_ij = du_i/dx_j``.
"""
from __future__ import annotations

import numpy as np

from .energy import BdfState, assemble_transport, solve_energy, stabilization_viscosity
from .fem import AffineConstraints, field_at_quadrature

FINITE_STRAIN_FIELDS = ("F_xx", "F_xy", "F_yx", "F_yy")


def advance_composition(space, qd, histories, velocity_q, dt, dt_prev=None, source_increments=None,
                        stabilization=True, constraints=None, rtol=1e-10):
    """Advance every field one step; returns the list of new raw vectors.

    Parameters
    ----------
    histories : list (one per field) of previous solutions, most recent first
    source_increments : list of ``(n_cells, nq)`` arrays or ``None`` entries
    """
    constraints = constraints or AffineConstraints(space)
    out = []
    for i, hist in enumerate(histories):
        hist = list(hist)
        bdf = BdfState(hist[:2], dt, dt_prev if len(hist) >= 2 else None)
        nu = 0.0
        if stabilization:
            nu = stabilization_viscosity(space, qd, hist[:2], velocity_q, 1.0, 0.0,
                                         dt_prev=bdf.dt_prev)
        inc = None if source_increments is None else source_increments[i]
        system = assemble_transport(space, qd, 1.0, velocity_q, np.broadcast_to(nu, (qd.n_cells,)),
                                    None, None, bdf, constraints, source_increment_q=inc)
        new, _ = solve_energy(system, rtol=rtol)
        out.append(new)
    return out


def advance_finite_strain(space, qd, F_histories, velocity_q, G, dt, dt_prev=None, stabilization=True,
                          constraints=None):
    """Advance the four deformation-gradient fields one step.

    ``F_histories`` lists, in :data:`FINITE_STRAIN_FIELDS` order, the previous
    solutions of each component (most recent first).  The source ``G F`` is
    evaluated with ``F`` extrapolated to the new time level, which keeps
    the scheme second order.  ``G`` has shape ``(n_cells, nq, 2, 2)``.
    """
    Fq = []
    for hist in F_histories:
        F_star = BdfState(list(hist), dt, dt_prev).extrapolate() if len(hist) >= 2 and dt_prev else hist[0]
        Fq.append(field_at_quadrature(space, F_star, qd, gradients=False)[..., 0])
    F = np.stack(Fq, axis=-1).reshape(Fq[0].shape + (2, 2))
    dF = finite_strain_source(G, F, dt).reshape(F.shape[:-2] + (4,))
    return advance_composition(space, qd, F_histories, velocity_q, dt, dt_prev,
                               [dF[..., i] for i in range(4)], stabilization, constraints)


def velocity_gradient(space, u, qd):
    """``G_ij = du_i/dx_j`` at quadrature points, shape ``(n_cells, nq, 2, 2)``."""
    return field_at_quadrature(space, u, qd)[1]


def finite_strain_source(G, F_prev, dt):
    """Increment ``dt * G F_prev`` for the four components of ``F``.

    ``G`` and ``F_prev`` have shape ``(..., 2, 2)``; the result has shape
    ``(..., 2, 2)`` (component order xx, xy, yx, yy when flattened).
    """
    return dt * np.einsum("...ij,...jk->...ik", np.asarray(G, dtype=float), np.asarray(F_prev, dtype=float))


def _sym2_sqrt(M):
    """Closed-form square root of symmetric positive definite 2x2 matrices."""
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    s = np.sqrt(det)
    t = np.sqrt(M[..., 0, 0] + M[..., 1, 1] + 2 * s)
    return (M + s[..., None, None] * np.eye(2)) / t[..., None, None]


def polar_decompose(F):
    """Left polar decomposition ``F = L R`` with ``L = sqrt(F F^T)`` SPD and ``R`` orthogonal."""
    F = np.asarray(F, dtype=float)
    det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    if np.any(det <= 0):
        raise ValueError("polar decomposition needs det F > 0")
    L = _sym2_sqrt(np.einsum("...ij,...kj->...ik", F, F))
    Linv = np.linalg.inv(L)
    R = np.einsum("...ij,...jk->...ik", Linv, F)
    return L, R


def symmetric_eigen(L):
    """Eigenvalues ``lam1 >= lam2`` and unit eigenvectors of symmetric 2x2 matrices."""
    L = np.asarray(L, dtype=float)
    a, b, d = L[..., 0, 0], 0.5 * (L[..., 0, 1] + L[..., 1, 0]), L[..., 1, 1]
    mean = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    lam1, lam2 = mean + rad, mean - rad
    # eigenvector of lam1: (b, lam1 - a) or (lam1 - d, b), whichever is better conditioned
    v1 = np.stack([b, lam1 - a], axis=-1)
    v2 = np.stack([lam1 - d, b], axis=-1)
    n1 = np.linalg.norm(v1, axis=-1)
    n2 = np.linalg.norm(v2, axis=-1)
    use2 = n2 > n1
    e1 = np.where(use2[..., None], v2, v1)
    n = np.maximum(n1, n2)
    diag = n == 0  # isotropic (or diagonal with a >= d): axis aligned
    e1 = np.where(diag[..., None], np.stack([np.ones_like(a), np.zeros_like(a)], -1), e1)
    e1 = e1 / np.linalg.norm(e1, axis=-1)[..., None]
    e2 = np.stack([-e1[..., 1], e1[..., 0]], axis=-1)
    return lam1, lam2, e1, e2


def natural_strain(L):
    """``ln(lam1/lam2)`` of an SPD stretch tensor and its eigenvector pair."""
    lam1, lam2, e1, e2 = symmetric_eigen(L)
    if np.any(lam2 <= 0):
        raise ValueError("stretch tensor must be positive definite")
    return np.log(lam1 / lam2), e1, e2


def strain_from_fields(values):
    """Natural strain and scaled eigen-glyph vectors from ``(..., 4)`` F-component values.

    Points where the transported ``F`` has lost ``det F > 0`` (possible when
    the flow is under-resolved in time) get NaN instead of raising, so that
    output of a running simulation is not aborted.
    """
    F = np.asarray(values, dtype=float).reshape(values.shape[:-1] + (2, 2))
    det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    valid = np.isfinite(det) & (det > 0)
    L, _ = polar_decompose(np.where(valid[..., None, None], F, np.eye(2)))
    lam1, lam2, e1, e2 = symmetric_eigen(L)
    strain = np.where(valid, np.log(lam1 / lam2), np.nan)
    g1 = np.where(valid[..., None], lam1[..., None] * e1, np.nan)
    g2 = np.where(valid[..., None], lam2[..., None] * e2, np.nan)
    return strain, g1, g2
