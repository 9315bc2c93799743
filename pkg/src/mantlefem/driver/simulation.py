"""The time loop: Stokes, energy, compositions, adaptivity, statistics and output.

One step of :func:`run_time_loop`:

1. ``dt`` from the CFL condition on the most recent velocity;
2. Stokes with the material evaluated at the extrapolated temperature
   ``T*`` (Picard iterations on the explicit compressibility term if
   configured);
3. the implicit BDF-2 energy equation with the new velocity;
4. compositional fields (and the finite-strain tensor);
5. time advance, statistics row, adaptivity every ``N`` steps, output.

The very first Stokes solve (with the initial temperature) supplies the
velocity for the first time step and is reused by step 1.
"""
from __future__ import annotations

import dataclasses
import os
import time as _time
from dataclasses import dataclass

import numpy as np

from .. import material as mat
from ..amr import IndicatorField, combine, gradient_indicator, kelly_indicator, mark_cells, transfer_solution
from ..energy import BdfState, HeatingTerms, assemble_energy, energy_coefficients, solve_energy, stabilization_viscosity
from ..fem import AffineConstraints, FunctionSpace, field_at_quadrature, interpolate
from ..krylov import SolverError
from ..mesh import create_rectangle
from ..stokes import (SolverReport, StokesDiscretization, assemble_stokes, compute_delta_correction,
                      normalize_pressure, picard_compressible, solve_stokes)
from ..transport import FINITE_STRAIN_FIELDS, advance_composition, advance_finite_strain
from .config import RunConfig
from .expressions import Expression
from .io import StatisticsWriter, write_vtk
from .statistics import statistics_row

OUTPUT_DIR_ENV = "MANTLEFEM_OUTPUT_DIR"


class SimulationError(RuntimeError):
    """A solver failed during the time loop; the partial statistics were written."""


# ----------------------------------------------------------------------
def compute_time_step(mesh, velocity, C=1.0, p_T=2, dt_max=np.inf):
    """``dt = C min_K h_K / (p_T |u|_inf,K)`` with ``h_K`` the minimal vertex distance.

    ``velocity`` holds quadrature-point vectors ``(n_cells, nq, 2)``,
    speeds ``(n_cells, nq)`` or per-cell maximum speeds ``(n_cells,)``.
    Cells at rest are skipped; if nothing moves the result is ``dt_max``.
    """
    v = np.asarray(velocity, dtype=float)
    if v.ndim == 3:
        v = np.linalg.norm(v, axis=-1)
    speed = v.max(axis=1) if v.ndim == 2 else v
    if not np.all(np.isfinite(speed)):
        raise ValueError("velocity must be finite")
    h = mesh.size_measure("min_vertex_distance")
    moving = speed > 0
    if not np.any(moving):
        return float(dt_max)
    dt = C * np.min(h[moving] / (p_T * speed[moving]))
    return float(min(dt, dt_max))


# ----------------------------------------------------------------------
def build_model(config: RunConfig) -> mat.MaterialModel:
    """Instantiate the material model named in the configuration."""
    mc = config.material
    if mc.model not in mat.MODELS:
        raise ValueError(f"unknown material model {mc.model!r}; known: {sorted(mat.MODELS)}")
    cls = mat.MODELS[mc.model]
    params = dict(mc.parameters)
    if mc.model == "latent_heat":
        keys = ("depth0", "width", "clapeyron", "temperature0", "density_jump")
        tr = {k: float(params.pop(f"transition_{k}")) for k in keys if f"transition_{k}" in params}
        rho = float(params.get("density", 3400.0))
        g = float(params.get("gravity_magnitude", 10.0))
        params["transition"] = mat.PhaseTransition(density=rho, gravity=g, **tr)
    names = {f.name for f in dataclasses.fields(cls)}
    if "approximation" in names:
        params.setdefault("approximation", config.formulation.approximation)
    for k, v in list(params.items()):
        if k not in names:
            raise ValueError(f"unknown parameter {k!r} for material model {mc.model!r}")
        if isinstance(v, str) and "," in v:
            params[k] = tuple(float(s) for s in v.split(","))
    params["top"] = float(config.geometry.y_extent[1])
    model = cls(**params)
    if mc.viscosity_minimum > 0 or np.isfinite(mc.viscosity_maximum):
        model = mat.ViscosityClamp(model, mc.viscosity_minimum, mc.viscosity_maximum)
    return model


def _velocity_boundary(config: RunConfig):
    top = config.geometry.y_extent[1]
    out = {}
    for side, spec in config.velocity_boundary.items():
        spec = str(spec).strip()
        if spec in ("no_slip", "free_slip", "open"):
            out[side] = spec
        elif spec.startswith("prescribed"):
            ex, ez = (Expression(s, config.constants) for s in spec[len("prescribed"):].split(";"))
            out[side] = (lambda ex, ez: lambda x, y, t=0.0: (ex(x, y, t, top), ez(x, y, t, top)))(ex, ez)
        else:
            raise ValueError(f"unknown velocity boundary {spec!r} on {side}")
    return out


@dataclass
class SimulationResult:
    simulation: "Simulation"
    statistics: list
    steady: bool
    reason: str
    output_dir: str | None = None


# ----------------------------------------------------------------------
class Simulation:
    """Simulation state (fields at the current and two previous times) plus the stepping logic."""

    def __init__(self, config: RunConfig, output_dir=None, log=None):
        self.config = config
        self.log = log or (lambda msg: None)
        self.model = build_model(config)
        g = config.geometry
        self.mesh = create_rectangle((tuple(g.x_extent), tuple(g.y_extent)), tuple(g.subdivisions))
        if g.global_refinement:
            self.mesh = self.mesh.refine_global(g.global_refinement)
        self.formulation = config.formulation
        self.velocity_bc = _velocity_boundary(config)
        top = g.y_extent[1]
        self.T_bc = {s: Expression(v, config.constants) for s, v in config.temperature_boundary.items()
                     if str(v).strip() != "insulating"}
        self.initial = {k: Expression(v, config.constants) for k, v in config.initial.items()}
        self.top = top
        self.composition_names = list(config.composition.fields)
        if config.composition.finite_strain:
            for n, default in zip(FINITE_STRAIN_FIELDS, ("1", "0", "0", "1")):
                if n not in self.composition_names:
                    self.composition_names.append(n)
                self.initial.setdefault(n, Expression(default))
        self.time = 0.0
        self.step = 0
        self.dt = None
        self.dt_prev = None
        self.heating = HeatingTerms(config.energy.internal_heating, config.energy.shear_heating,
                                    config.energy.adiabatic_heating, config.energy.latent_heat)
        self.output_dir = output_dir
        self.last_indicator = None
        self.amr_label = ""
        self.n_refined = 0
        self.n_coarsened = 0
        self._stokes_cache = {}
        self._build_spaces()
        self._set_initial_fields()
        for _ in range(config.amr.initial_cycles):
            self.adapt(reinitialize=True)

    # ------------------------------------------------------------------
    def _build_spaces(self):
        c = self.config
        self.disc = StokesDiscretization(self.mesh, c.spaces.pressure_element, self.velocity_bc,
                                         c.spaces.quadrature_degree)
        self.qd = self.disc.qd
        self.Tspace = FunctionSpace(self.mesh, f"Q{c.spaces.temperature_degree}", 1)
        self.Cspace = self.Tspace
        self.C_constraints = AffineConstraints(self.Cspace)
        self.update_temperature_constraints()
        self._stokes_cache = {}

    def update_temperature_constraints(self):
        out = {}
        for side, ex in self.T_bc.items():
            nodes = self.Tspace.boundary_nodes(side)
            pts = self.Tspace.node_points[nodes]
            vals = ex(pts[:, 0], pts[:, 1], self.time, self.top)
            out.update({int(n): float(v) for n, v in zip(nodes, vals)})
        self.T_constraints = AffineConstraints(self.Tspace, out)

    def _interp(self, name, space):
        ex = self.initial.get(name, Expression("0"))
        return interpolate(lambda x, y: ex(x, y, 0.0, self.top), space)

    def _set_initial_fields(self):
        T0 = self.T_constraints.apply(self._interp("temperature", self.Tspace))
        self.T_hist = [T0]
        self.C_hist = {n: [self.C_constraints.apply(self._interp(n, self.Cspace))]
                       for n in self.composition_names}
        self.u = np.zeros(self.disc.n_velocity)
        self.p = np.zeros(self.disc.n_pressure)
        self.u_hist = []
        self.stokes_report = SolverReport()
        self.picard_iterations = 0
        self.energy_iterations = 0
        self._stokes_current = False

    # ------------------------------------------------------------------
    @property
    def T(self):
        return self.T_hist[0]

    def composition(self, name):
        return self.C_hist[name][0]

    def _extrapolate(self, hist):
        if self.dt is None or len(hist) < 2 or self.dt_prev is None:
            return hist[0]
        return BdfState(hist, self.dt, self.dt_prev).extrapolate()

    def material_inputs(self, T, p, u, compositions=None):
        qd = self.qd
        Tq = field_at_quadrature(self.Tspace, T, qd, gradients=False)[..., 0]
        pq = field_at_quadrature(self.disc.pressure, p, qd, gradients=False)[..., 0]
        uq, gu = field_at_quadrature(self.disc.velocity, u, qd)
        eps = 0.5 * (gu + np.swapaxes(gu, -1, -2))
        comp = None
        if compositions:
            comp = np.stack([field_at_quadrature(self.Cspace, c, qd, gradients=False)[..., 0]
                             for c in compositions], axis=-1)
        return mat.MaterialInputs(qd.points, Tq, pq, eps, comp, previous_pressure=pq), uq, gu

    def evaluate_material(self, T, p, u):
        comps = [self.C_hist[n][0] for n in self.composition_names] or None
        inputs, uq, gu = self.material_inputs(T, p, u, comps)
        out = mat.evaluate(self.model, inputs)
        out = mat.average_outputs(out, self.config.material.averaging, self.qd.ref_points)
        return out, inputs, uq, gu

    # ------------------------------------------------------------------
    def solve_stokes(self):
        """Stokes solve at the new time level; updates ``u``, ``p`` and the report."""
        cfg = self.config
        T_star = self._extrapolate(self.T_hist)
        u_star = self._extrapolate(self.u_hist) if self.u_hist else self.u
        outputs, inputs, _, _ = self.evaluate_material(T_star, self.p, u_star)
        self.stokes_outputs = outputs
        grav = self.model.gravity(self.qd.points)
        tgrad = None
        if self.formulation.reference_profile == "previous":
            tgrad = field_at_quadrature(self.Tspace, T_star, self.qd)[1][..., 0, :]
        self.disc.update_boundary_values(self.time + (self.dt or 0.0))

        def assemble(us):
            system = assemble_stokes(self.disc, outputs, self.formulation, grav, u_star=us,
                                     temperature_gradient=tgrad)
            compute_delta_correction(system)
            return system

        solver = cfg.stokes.solver()
        x0 = (self.u, self.p) if self.u_hist else None

        def solve(system):
            return solve_stokes(system, solver, x0=x0, cache=self._stokes_cache)

        if self.formulation.mass_strategy == "explicit" and cfg.stokes.nonlinear_iterations > 1:
            res = picard_compressible(assemble, solve, u_star, cfg.stokes.nonlinear_tolerance,
                                      cfg.stokes.nonlinear_iterations)
            u, p, report, its = res.u, res.p, res.total, res.iterations
            self.stokes_system = res.system
        else:
            self.stokes_system = assemble(u_star)
            u, p, report = solve(self.stokes_system)
            its = 1
        if cfg.stokes.pressure_normalization == "surface":
            p = normalize_pressure(p, self.disc, "surface")
        self.u, self.p = u, p
        self.stokes_report = report
        self.picard_iterations = its

    def solve_energy(self):
        cfg = self.config
        bdf = BdfState(self.T_hist[:2], self.dt, self.dt_prev if len(self.T_hist) >= 2 else None)
        T_star = bdf.extrapolate()
        outputs, inputs, uq, gu = self.evaluate_material(T_star, self.p, self.u)
        grav = self.model.gravity(self.qd.points)
        shear = shear_heating(outputs.viscosity, gu, self.formulation.compressible)
        Tq = inputs.temperature
        cap, k, reaction, source = energy_coefficients(outputs, self.formulation.approximation, uq, grav,
                                                       Tq, self.heating, shear)
        nu = None
        if cfg.energy.stabilization:
            nu = stabilization_viscosity(self.Tspace, self.qd, self.T_hist[:2], uq, cap, k, source,
                                         dt_prev=bdf.dt_prev, beta=cfg.energy.stabilization_beta,
                                         c_R=cfg.energy.stabilization_cR)
        self.update_temperature_constraints()
        system = assemble_energy(self.Tspace, self.qd, outputs, self.formulation.approximation, uq, grav,
                                 bdf, self.T_constraints, self.heating, nu, shear, Tq)
        T_new, its = solve_energy(system, rtol=cfg.energy.rtol)
        self.energy_iterations = its
        return T_new

    def advance_compositions(self):
        if not self.composition_names:
            return {}
        uq, gu = field_at_quadrature(self.disc.velocity, self.u, self.qd)
        cfg = self.config.composition
        names = list(self.composition_names)
        new = {}
        if cfg.finite_strain:
            F = advance_finite_strain(self.Cspace, self.qd, [self.C_hist[n][:2] for n in FINITE_STRAIN_FIELDS],
                                      uq, gu, self.dt, self.dt_prev, cfg.stabilization, self.C_constraints)
            new.update(zip(FINITE_STRAIN_FIELDS, F))
            names = [n for n in names if n not in FINITE_STRAIN_FIELDS]
        if names:
            out = advance_composition(self.Cspace, self.qd, [self.C_hist[n][:2] for n in names], uq,
                                      self.dt, self.dt_prev, None, cfg.stabilization, self.C_constraints)
            new.update(zip(names, out))
        return new

    # ------------------------------------------------------------------
    def initial_solve(self):
        """Stokes with the initial fields (provides the first CFL velocity)."""
        self.solve_stokes()
        self._stokes_current = True

    def do_step(self):
        cfg = self.config
        uq = field_at_quadrature(self.disc.velocity, self.u, self.qd, gradients=False)
        self.dt = compute_time_step(self.mesh, uq, cfg.time.cfl, cfg.spaces.temperature_degree,
                                    cfg.time.dt_max)
        if np.isfinite(cfg.time.end_time):
            self.dt = min(self.dt, cfg.time.end_time - self.time)
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise SimulationError(f"invalid time step {self.dt}")
        if not self._stokes_current:
            self.solve_stokes()
        self._stokes_current = False
        if cfg.energy.enabled:
            T_new = self.solve_energy()
        else:
            T_new = self.T
        new_C = self.advance_compositions()
        self.u_hist = [self.u] + self.u_hist[:1]
        self.T_hist = [T_new] + self.T_hist[:1]
        for n, v in new_C.items():
            self.C_hist[n] = [v] + self.C_hist[n][:1]
        self.time += self.dt
        self.dt_prev = self.dt
        self.step += 1

    # ------------------------------------------------------------------
    def indicator(self) -> IndicatorField:
        cfg = self.config.amr
        inds = []
        for crit in cfg.criteria:
            kind, _, name = crit.partition(":")
            if kind == "kelly":
                if name in ("T", "temperature"):
                    inds.append(kelly_indicator(self.Tspace, self.T, label="kelly:T"))
                elif name in ("u", "velocity"):
                    inds.append(kelly_indicator(self.disc.velocity, self.u, label="kelly:u"))
                elif name in self.C_hist:
                    inds.append(kelly_indicator(self.Cspace, self.C_hist[name][0], label=f"kelly:{name}"))
                else:
                    raise ValueError(f"unknown field {name!r} in refinement criterion {crit!r}")
            elif kind == "gradient":
                if name not in ("viscosity", "density"):
                    raise ValueError(f"gradient criterion needs viscosity or density, got {name!r}")
                out = self.evaluate_material(self.T, self.p, self.u)[0]
                vals = getattr(out, name)
                cellv = np.sum(vals * self.qd.JxW, axis=1) / self.qd.JxW.sum(axis=1)
                if name == "viscosity":
                    cellv = np.log10(cellv)
                inds.append(gradient_indicator(cellv, self.mesh, label=f"gradient:{name}"))
            else:
                raise ValueError(f"unknown refinement criterion {crit!r}")
        if len(inds) == 1 and cfg.scaling == "none":
            return inds[0]
        return combine(inds, cfg.scaling, cfg.mode)

    def adapt(self, reinitialize=False):
        """Mark, refine/coarsen and transfer every field to the new mesh."""
        cfg = self.config.amr
        ind = self.indicator()
        self.last_indicator = ind
        refine, coarsen = mark_cells(ind, self.mesh, cfg.refine_fraction, cfg.coarsen_fraction,
                                     cfg.min_level, None if cfg.max_level < 0 else cfg.max_level)
        old_mesh = self.mesh
        new_mesh = self.mesh.execute_refinement(refine, coarsen)
        if not new_mesh.is_balanced():
            raise SimulationError("adapted mesh violates the 2:1 balance")
        self.amr_label = ind.label
        self.n_refined = int(refine.sum())
        self.n_coarsened = int(coarsen.sum())
        old_T, old_V, old_P, old_C = self.Tspace, self.disc.velocity, self.disc.pressure, self.Cspace
        self.mesh = new_mesh
        self._build_spaces()
        self.log(f"adapt: {ind.label} refined {self.n_refined}, coarsened {self.n_coarsened}: "
                 f"{old_mesh.n_active} -> {new_mesh.n_active} cells")
        if reinitialize:
            self._set_initial_fields()
            return
        self.T_hist = [self.T_constraints.apply(transfer_solution(old_T, t, self.Tspace))
                       for t in self.T_hist]
        for n in self.C_hist:
            self.C_hist[n] = [transfer_solution(old_C, c, self.Cspace) for c in self.C_hist[n]]
        self.u_hist = [transfer_solution(old_V, v, self.disc.velocity) for v in self.u_hist]
        self.u = transfer_solution(old_V, self.u, self.disc.velocity)
        self.p = transfer_solution(old_P, self.p, self.disc.pressure)
        self._stokes_current = False

    # ------------------------------------------------------------------
    def statistics(self) -> dict:
        row = statistics_row(self)
        return row


def shear_heating(viscosity, grad_u, compressible):
    """``tau : eps`` with ``tau = 2 eta (eps - 1/3 div u I)`` (deviatoric part only if compressible)."""
    eps = 0.5 * (grad_u + np.swapaxes(grad_u, -1, -2))
    ee = np.einsum("...ij,...ij->...", eps, eps)
    if compressible:
        div = eps[..., 0, 0] + eps[..., 1, 1]
        ee = ee - div ** 2 / 3.0
    return 2.0 * viscosity * ee


# ----------------------------------------------------------------------
def resolve_output_dir(config: RunConfig, override=None):
    """CLI override, then the environment variable, then the configuration."""
    return override or os.environ.get(OUTPUT_DIR_ENV) or config.output.directory


def run_time_loop(config: RunConfig, output_dir=None, log=print, write_files=True,
                  simulation: Simulation | None = None) -> SimulationResult:
    """Run a configured simulation; returns the final state and the statistics rows.

    If ``simulation`` is given (an already solved state, e.g. after
    :func:`continue_on_finer_mesh`) time stepping continues from it and
    ``time.max_steps`` counts the additional steps.  On a solver failure the
    statistics gathered so far are written and a :class:`SimulationError` is
    raised.
    """
    out_dir = resolve_output_dir(config, output_dir) if write_files else None
    logger = log if config.output.log and log else (lambda m: None)
    writer = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.echo.cfg"), "w", encoding="utf-8") as fh:
            fh.write(config.echo())
        writer = StatisticsWriter(os.path.join(out_dir, config.output.statistics_file))
    logger(config.echo())
    rows = []
    steady = False
    reason = "max_steps"
    tc = config.time
    sim = simulation
    try:
        t0 = _time.perf_counter()
        if sim is None:
            sim = Simulation(config, out_dir, logger)
            sim.initial_solve()
        else:
            sim.config = config
            sim.output_dir = out_dir
        first_step = sim.step
        if out_dir and config.output.vtk_every:
            write_vtk(sim, os.path.join(out_dir, f"solution-{sim.step:05d}.vtk"))
        history = []
        while sim.step - first_step < tc.max_steps and sim.time < tc.end_time * (1 - 1e-12):
            sim.do_step()
            did_adapt = False
            if config.amr.every and sim.step % config.amr.every == 0:
                sim.adapt()
                did_adapt = True
            row = sim.statistics()
            if not did_adapt:
                row["amr_label"] = ""
                row["n_refined"] = row["n_coarsened"] = 0
            row["wall_time"] = _time.perf_counter() - t0
            rows.append(row)
            if writer:
                writer.write(row)
            if out_dir and config.output.vtk_every and sim.step % config.output.vtk_every == 0:
                write_vtk(sim, os.path.join(out_dir, f"solution-{sim.step:05d}.vtk"))
            if sim.step % 10 == 0 or sim.step == 1:
                logger(f"step {sim.step:5d} t={sim.time:.6g} dt={sim.dt:.3g} Nu={row['Nu']:.6f} "
                       f"Vrms={row['Vrms']:.6f} cells={row['n_cells']}")
            history.append(row[tc.steady_quantity])
            if tc.steady_tolerance > 0 and len(history) > tc.steady_window:
                window = np.asarray(history[-tc.steady_window - 1:])
                ref = abs(window[-1]) if window[-1] != 0 else 1.0
                if np.max(np.abs(window - window[-1])) / ref < tc.steady_tolerance:
                    steady = True
                    reason = "steady"
                    break
        else:
            reason = "end_time" if sim.time >= tc.end_time * (1 - 1e-12) else "max_steps"
    except (SolverError, SimulationError, np.linalg.LinAlgError, RuntimeError) as err:
        if writer:
            writer.close()
        raise SimulationError(f"run aborted at step {sim.step if sim else 0}: {err}") from err
    if writer:
        writer.close()
    if out_dir and config.output.vtk_every:
        write_vtk(sim, os.path.join(out_dir, f"solution-{sim.step:05d}.vtk"))
    logger(f"finished: {reason} after {sim.step} steps, t = {sim.time:.6g}")
    return SimulationResult(sim, rows, steady, reason, out_dir)


def continue_on_finer_mesh(sim: Simulation, refinements=1):
    """Globally refine and transfer the state (used for resolution continuation)."""
    for _ in range(refinements):
        n = sim.mesh.n_active
        cfg = dataclasses.replace(sim.config.amr, refine_fraction=1.0, coarsen_fraction=0.0,
                                  criteria=("kelly:T",), scaling="none", min_level=0, max_level=-1)
        saved = sim.config.amr
        sim.config.amr = cfg
        try:
            sim.adapt()
        finally:
            sim.config.amr = saved
        assert sim.mesh.n_active == 4 * n
    sim.initial_solve()
    return sim


__all__ = ["compute_time_step", "run_time_loop", "Simulation", "SimulationResult", "SimulationError",
           "build_model", "shear_heating", "continue_on_finer_mesh", "OUTPUT_DIR_ENV"]
