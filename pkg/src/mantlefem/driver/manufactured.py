"""Manufactured-solution convergence studies for the Stokes and energy solvers.

Forcing terms are derived symbolically (sympy) from closed-form solutions:

* Stokes: stream-function velocity ``psi = sin^2(pi x) sin^2(pi y)``,
  ``p = cos(pi x) cos(pi y)``, viscosity ``eta = exp(x y)`` on the unit square
  with the exact velocity prescribed on the boundary.
* Energy: ``T = sin(pi x) sin(pi y) cos(t)`` advected by a rigid rotation
  about the box centre, with unit capacity, diffusivity ``kappa`` and
  homogeneous Dirichlet data; used to measure the temporal order of BDF-2.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sym

from ..energy import BdfState, assemble_transport, solve_energy
from ..fem import AffineConstraints, CellQuadrature, FunctionSpace, field_at_quadrature, interpolate
from ..material import make_outputs
from ..mesh import create_rectangle
from ..stokes import FormulationConfig, SolverConfig, StokesDiscretization, assemble_stokes, solve_stokes


@dataclass
class ConvergenceStudy:
    """Errors per refinement level and the observed orders between consecutive levels."""

    parameter: list
    errors: dict
    reports: list = field(default_factory=list)

    def rates(self, name, ratio=2.0):
        e = np.asarray(self.errors[name], dtype=float)
        return np.log(e[:-1] / e[1:]) / np.log(ratio)

    def fitted_order(self, name) -> float:
        """Least-squares slope of ``log error`` against ``log(1/parameter)``.

        The parameter is a number of cells per side or of time steps, so
        ``1/parameter`` is proportional to ``h`` or ``dt``.
        """
        e = np.asarray(self.errors[name], dtype=float)
        x = -np.log(np.asarray(self.parameter, dtype=float))
        return float(np.polyfit(x, np.log(e), 1)[0])

    def table(self) -> str:
        names = list(self.errors)
        head = "param  " + "  ".join(f"{n:>12s}  {'order':>6s}" for n in names)
        lines = [head]
        for i, par in enumerate(self.parameter):
            cols = []
            for n in names:
                r = self.rates(n)[i - 1] if i > 0 else float("nan")
                cols.append(f"{self.errors[n][i]:12.4e}  {r:6.2f}")
            lines.append(f"{par!s:>5}  " + "  ".join(cols))
        return "\n".join(lines)


# ----------------------------------------------------------------------
def stokes_manufactured_solution():
    """Lambdified ``u(x, y)``, ``p(x, y)``, ``eta(x, y)`` and body force ``f(x, y)``."""
    x, y = sym.symbols("x y")
    psi = sym.sin(sym.pi * x) ** 2 * sym.sin(sym.pi * y) ** 2
    u = [sym.diff(psi, y), -sym.diff(psi, x)]
    p = sym.cos(sym.pi * x) * sym.cos(sym.pi * y)
    eta = sym.exp(x * y)
    X = [x, y]
    eps = [[(sym.diff(u[i], X[j]) + sym.diff(u[j], X[i])) / 2 for j in range(2)] for i in range(2)]
    f = [-sum(sym.diff(2 * eta * eps[i][j], X[j]) for j in range(2)) + sym.diff(p, X[i]) for i in range(2)]
    lam = lambda e: sym.lambdify((x, y), e, "numpy")  # noqa: E731
    return {"u": lam(u), "p": lam(p), "eta": lam(eta), "f": lam(f)}


def _l2_error(space, vec, exact, qd):
    val = field_at_quadrature(space, vec, qd, gradients=False)
    pts = qd.points
    ex = exact(pts[..., 0], pts[..., 1])
    ex = np.stack([np.broadcast_to(e, pts.shape[:2]) for e in ex], axis=-1) if isinstance(ex, list) \
        else np.broadcast_to(ex, pts.shape[:2])[..., None]
    return float(np.sqrt(np.sum(np.sum((val - ex) ** 2, axis=-1) * qd.JxW)))


def stokes_convergence(resolutions=(16, 32, 64, 128), pressure_element="Q1", solver=None):
    """Velocity and pressure L2 errors of the manufactured Stokes problem."""
    sol = stokes_manufactured_solution()
    solver = solver or SolverConfig(method="gmres", rtol=1e-10)
    errs_u, errs_p, reports = [], [], []
    for n in resolutions:
        mesh = create_rectangle(((0.0, 1.0), (0.0, 1.0)), (n, n))
        exact_u = lambda x, y: sol["u"](x, y)  # noqa: E731
        disc = StokesDiscretization(mesh, pressure_element, {s: exact_u for s in
                                                             ("left", "right", "bottom", "top")})
        pts = disc.qd.points
        out = make_outputs(pts.shape[:2], viscosity=sol["eta"](pts[..., 0], pts[..., 1]), density=1.0)
        force = np.stack(sol["f"](pts[..., 0], pts[..., 1]), axis=-1)
        system = assemble_stokes(disc, out, FormulationConfig("BA"), force)
        u, p, rep = solve_stokes(system, solver)
        qd = CellQuadrature(mesh, 7)
        errs_u.append(_l2_error(disc.velocity, u, sol["u"], qd))
        errs_p.append(_l2_error(disc.pressure, p, sol["p"], qd))
        reports.append(rep)
    return ConvergenceStudy(list(resolutions), {"velocity": errs_u, "pressure": errs_p}, reports)


# ----------------------------------------------------------------------
def energy_manufactured_solution(kappa=0.01, omega=1.0):
    """Lambdified ``T(x, y, t)``, velocity ``u(x, y)`` and source ``f(x, y, t)``."""
    x, y, t = sym.symbols("x y t")
    T = sym.sin(sym.pi * x) * sym.sin(sym.pi * y) * sym.cos(omega * t)
    u = [-(y - sym.Rational(1, 2)), x - sym.Rational(1, 2)]
    f = sym.diff(T, t) + u[0] * sym.diff(T, x) + u[1] * sym.diff(T, y) \
        - kappa * (sym.diff(T, x, 2) + sym.diff(T, y, 2))
    return {"T": sym.lambdify((x, y, t), T, "numpy"), "u": sym.lambdify((x, y), u, "numpy"),
            "f": sym.lambdify((x, y, t), f, "numpy")}


def energy_temporal_convergence(steps=(5, 10, 20, 40), resolution=32, end_time=2.0, kappa=0.01,
                                degree=2):
    """Final-time L2 error of BDF-2 (backward-Euler start) for decreasing ``dt``."""
    sol = energy_manufactured_solution(kappa)
    mesh = create_rectangle(((0.0, 1.0), (0.0, 1.0)), (resolution, resolution))
    space = FunctionSpace(mesh, f"Q{degree}", 1)
    qd = CellQuadrature(mesh)
    sides = ("left", "right", "bottom", "top")
    bnd = np.unique(np.concatenate([space.boundary_nodes(s) for s in sides]))
    cons = AffineConstraints(space, {int(i): 0.0 for i in bnd})
    pts = qd.points
    uq = np.stack([np.broadcast_to(c, pts.shape[:2]) for c in sol["u"](pts[..., 0], pts[..., 1])], -1)
    errors = []
    for n in steps:
        dt = end_time / n
        hist = [cons.apply(interpolate(lambda a, b: sol["T"](a, b, 0.0), space))]
        t = 0.0
        for k in range(n):
            bdf = BdfState(hist[:2], dt, dt if len(hist) >= 2 else None)
            src = sol["f"](pts[..., 0], pts[..., 1], t + dt)
            system = assemble_transport(space, qd, 1.0, uq, np.full(qd.n_cells, kappa), None, src, bdf, cons)
            new, _ = solve_energy(system, rtol=1e-12)
            hist = [new] + hist[:1]
            t += dt
        qd7 = CellQuadrature(mesh, 7)
        errors.append(_l2_error(space, hist[0], lambda a, b: sol["T"](a, b, end_time), qd7))
    return ConvergenceStudy(list(steps), {"temperature": errors})


def run_manufactured(config):
    """Dispatch a manufactured-solution scenario from a :class:`RunConfig`."""
    if config.scenario == "mms_stokes":
        res = [int(s) for s in str(config.info.get("resolutions", "16, 32, 64, 128")).split(",")]
        return stokes_convergence(res, config.spaces.pressure_element, config.stokes.solver())
    if config.scenario == "mms_energy":
        steps = [int(s) for s in str(config.info.get("steps", "5, 10, 20, 40")).split(",")]
        return energy_temporal_convergence(steps, 2 ** config.geometry.global_refinement)
    raise ValueError(f"not a manufactured-solution scenario: {config.scenario!r}")
