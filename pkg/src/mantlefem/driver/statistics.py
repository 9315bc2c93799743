"""Per-step statistics: Nusselt number, rms velocity, mean temperature, heating integrals.

Conventions
-----------
``Nu = H * int_top k (-dT/dy) dx / (W * dT_ref * k_mean)``, i.e. the surface
heat flux normalized by the conductive flux ``k dT_ref / H`` through a box of
width ``W`` and height ``H``; ``dT_ref`` is ``info.nusselt_delta_T`` (default
1).  ``T_mean`` is the volume average of ``T - info.temperature_offset``
(default offset 0).  ``Vrms = (int |u|^2 / |Omega|)^(1/2)``.  ``phi = int tau : eps`` is the
shear-heating integral and ``W = int alpha rho T (-u . g)`` the adiabatic
heating integral, counted positive when hot material rises.
"""
from __future__ import annotations

import numpy as np

from .. import material as mat
from ..fem import evaluate_at_points, field_at_quadrature, gauss_1d

COLUMNS = ("step", "time", "dt", "n_cells", "n_dofs_u", "n_dofs_p", "n_dofs_T", "Nu", "Nu_bottom",
           "Vrms", "T_mean", "T_min", "T_max", "phi", "W", "outer_its", "innerA_its", "innerS_its",
           "residual", "picard_its", "energy_its", "delta", "amr_label", "n_refined", "n_coarsened",
           "wall_time")


def boundary_heat_flux(space, T, mesh, side, model=None, pressure=None, n_gauss=3):
    """``(int_side k (-dT/dy) dx, int_side k dx)`` on the top or bottom boundary."""
    (x0, x1), (y0, y1) = mesh.extents
    origin, h = mesh.cell_geometry()
    y = y1 if side == "top" else y0
    edge = origin[:, 1] + (h[:, 1] if side == "top" else 0.0)
    cells = np.flatnonzero(np.isclose(edge, y))
    t, w = gauss_1d(n_gauss)
    xs = (origin[cells, 0][:, None] + h[cells, 0][:, None] * t[None, :]).ravel()
    ws = (h[cells, 0][:, None] * w[None, :]).ravel()
    pts = np.column_stack([xs, np.full_like(xs, y)])
    vals, grads = evaluate_at_points(T, space, pts)
    k = np.ones(len(xs))
    if model is not None:
        p = np.zeros(len(xs)) if pressure is None else pressure(pts)
        out = model.evaluate(mat.MaterialInputs(pts, vals[:, 0], p))
        k = np.broadcast_to(out.conductivity, (len(xs),))
    flux = float(np.sum(ws * k * -grads[:, 0, 1]))
    return flux, float(np.sum(ws * k))


def nusselt_number(space, T, mesh, side="top", delta_T=1.0, model=None, pressure=None):
    """Boundary heat flux normalized by the conductive reference (see module docstring)."""
    (x0, x1), (y0, y1) = mesh.extents
    flux, kint = boundary_heat_flux(space, T, mesh, side, model, pressure)
    width, height = x1 - x0, y1 - y0
    k_mean = kint / width
    return height * flux / (width * delta_T * k_mean)


def vrms(velocity_space, u, qd):
    uq = field_at_quadrature(velocity_space, u, qd, gradients=False)
    return float(np.sqrt(np.sum(np.sum(uq ** 2, axis=-1) * qd.JxW) / qd.JxW.sum()))


def statistics_row(sim) -> dict:
    """One statistics row for a solved simulation state."""
    from .simulation import shear_heating

    qd = sim.qd
    area = qd.JxW.sum()
    T = sim.T
    Tq = field_at_quadrature(sim.Tspace, T, qd, gradients=False)[..., 0]
    uq, gu = field_at_quadrature(sim.disc.velocity, sim.u, qd)
    outputs = sim.evaluate_material(T, sim.p, sim.u)[0]
    phi_q = shear_heating(outputs.viscosity, gu, sim.formulation.compressible)
    grav = sim.model.gravity(qd.points)
    rho = outputs.energy_density(sim.formulation.approximation)
    w_q = outputs.thermal_expansivity * rho * Tq * -np.einsum("cqd,cqd->cq", uq, grav)
    delta_T = float(sim.config.info.get("nusselt_delta_T", 1.0))
    offset = float(sim.config.info.get("temperature_offset", 0.0))

    def pressure_at(pts):
        return evaluate_at_points(sim.p, sim.disc.pressure, pts)[0][:, 0]

    rep = sim.stokes_report
    system = getattr(sim, "stokes_system", None)
    return {
        "step": sim.step,
        "time": sim.time,
        "dt": sim.dt if sim.dt is not None else 0.0,
        "n_cells": sim.mesh.n_active,
        "n_dofs_u": sim.disc.n_velocity,
        "n_dofs_p": sim.disc.n_pressure,
        "n_dofs_T": sim.Tspace.n_dofs,
        "Nu": nusselt_number(sim.Tspace, T, sim.mesh, "top", delta_T, sim.model, pressure_at),
        "Nu_bottom": nusselt_number(sim.Tspace, T, sim.mesh, "bottom", delta_T, sim.model, pressure_at),
        "Vrms": vrms(sim.disc.velocity, sim.u, qd),
        "T_mean": float(np.sum(Tq * qd.JxW) / area) - offset,
        "T_min": float(T.min()),
        "T_max": float(T.max()),
        "phi": float(np.sum(phi_q * qd.JxW)),
        "W": float(np.sum(w_q * qd.JxW)),
        "outer_its": rep.outer_iterations,
        "innerA_its": rep.inner_A_iterations,
        "innerS_its": rep.inner_S_iterations,
        "residual": rep.residual,
        "picard_its": sim.picard_iterations,
        "energy_its": sim.energy_iterations,
        "delta": system.delta if system is not None else 0.0,
        "amr_label": sim.amr_label,
        "n_refined": sim.n_refined,
        "n_coarsened": sim.n_coarsened,
        "wall_time": 0.0,
    }
