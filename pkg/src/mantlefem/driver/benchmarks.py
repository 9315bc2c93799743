"""Benchmark scenarios as fully populated :class:`RunConfig` objects."""
from __future__ import annotations

import numpy as np

from ..stokes import FormulationConfig
from .config import RunConfig

BENCHMARKS = ("king", "arctan", "sinker", "latent_pipe", "finite_strain", "mms_stokes", "mms_energy")

#: surface temperature over temperature contrast (273 K / 3000 K)
KING_T_TOP = 273.0 / 3000.0


def _free_slip_box():
    return {s: "free_slip" for s in ("left", "right", "bottom", "top")}


def king(Di=0.25, Ra=1e4, resolution=32, formulation="ALA", averaging="none", pressure_space="Q1",
         mass_strategy="explicit", gamma=1.0, max_steps=20000, steady_tolerance=1e-5, cfl=1.0,
         solver="direct") -> RunConfig:
    """Compressible convection in a unit box heated from below.

    All constants are one except ``alpha = Di`` and ``eta = Di / Ra``; the
    reference state follows ``rho_ref = exp(Di depth / gamma)`` and
    ``T_ref = T_top exp(Di depth)``.  The initial temperature is the
    conductive profile plus a small cosine perturbation.
    """
    level = int(round(np.log2(resolution)))
    if 2 ** level != resolution:
        raise ValueError("King resolution must be a power of two")
    cfg = RunConfig(name=f"king_{formulation}_Di{Di:g}_Ra{Ra:g}_{resolution}")
    cfg.geometry.global_refinement = level
    cfg.spaces.pressure_element = pressure_space
    cfg.material.model = "king"
    cfg.material.averaging = averaging
    cfg.material.parameters = {"Di": float(Di), "Ra": float(Ra), "gamma": float(gamma),
                               "T_top": KING_T_TOP}
    cfg.formulation = FormulationConfig(formulation, "incompressible" if formulation == "BA" else mass_strategy,
                                        "adiabatic")
    cfg.stokes.method = solver
    cfg.stokes.pressure_normalization = "surface" if formulation == "ALA" else "volume"
    cfg.energy.internal_heating = False
    cfg.energy.shear_heating = formulation != "BA"
    cfg.energy.adiabatic_heating = formulation != "BA"
    cfg.energy.latent_heat = False
    cfg.time.cfl = cfl
    cfg.time.max_steps = max_steps
    cfg.time.steady_tolerance = steady_tolerance
    cfg.time.steady_window = 50
    cfg.velocity_boundary = _free_slip_box()
    cfg.constants = {"T_top": KING_T_TOP}
    cfg.temperature_boundary = {"top": "T_top", "bottom": "T_top + 1"}
    cfg.initial = {"temperature": "T_top + depth + 0.01 * cos(pi * x) * sin(pi * depth)"}
    cfg.info = {"alpha": float(Di) if Di > 0 else 1.0, "eta": float(Di / Ra) if Di > 0 else 1.0 / Ra,
                "gamma": float(gamma), "L": 1.0, "nusselt_delta_T": 1.0,
                "temperature_offset": KING_T_TOP}
    return cfg


def arctan(c=30.0, resolution=32, formulation="TALA", mass_strategy="implicit", pressure_space="Q1",
           Di=0.1, Ra=1e4, nonlinear_iterations=1, nonlinear_tolerance=1e-6, solver="direct") -> RunConfig:
    """Unit box with ``rho_ref = 1.6 + arctan(c (depth - 0.5))``, inflow ``u = (0, -1)`` at the top.

    Sides are free slip and the bottom is open; a single Stokes solve.
    """
    cfg = RunConfig(name=f"arctan_c{c:g}_{mass_strategy}")
    cfg.geometry.global_refinement = int(round(np.log2(resolution)))
    cfg.spaces.pressure_element = pressure_space
    cfg.material.model = "arctan"
    cfg.material.parameters = {"c": float(c), "Di": float(Di), "Ra": float(Ra)}
    cfg.formulation = FormulationConfig(formulation, mass_strategy, "adiabatic")
    cfg.stokes.method = solver
    cfg.stokes.nonlinear_iterations = nonlinear_iterations
    cfg.stokes.nonlinear_tolerance = nonlinear_tolerance
    cfg.energy.enabled = False
    cfg.time.max_steps = 1
    cfg.velocity_boundary = {"left": "free_slip", "right": "free_slip", "bottom": "open",
                             "top": "prescribed 0 ; -1"}
    cfg.initial = {"temperature": "0"}
    return cfg


def sinker(resolution=64, averaging="harmonic", pressure_space="Q1", center=(0.5, 0.5), radius=0.125,
           viscosity_inside=1e6, density_inside=10.0, inner_preconditioner="amg", rtol=1e-6) -> RunConfig:
    """A dense, stiff disk in a unit box with free-slip walls; one Stokes solve.

    The default outer tolerance ``rtol = 1e-6`` sits above the round-off
    floor of the assembled system: with a ``1e6`` viscosity jump the
    residual ``b - K x`` cannot be evaluated more accurately than about
    ``eps |K| |x| / |b|``, which reaches a few ``1e-7`` at ``256^2``.
    """
    cfg = RunConfig(name=f"sinker_{averaging}_{resolution}")
    cfg.geometry.global_refinement = int(round(np.log2(resolution)))
    cfg.spaces.pressure_element = pressure_space
    cfg.material.model = "sinker"
    cfg.material.averaging = averaging
    cfg.material.parameters = {"center": f"{center[0]}, {center[1]}", "radius": float(radius),
                               "viscosity_inside": float(viscosity_inside),
                               "density_inside": float(density_inside)}
    cfg.formulation = FormulationConfig("BA")
    cfg.stokes.method = "gmres"
    cfg.stokes.inner_preconditioner = inner_preconditioner
    cfg.stokes.rtol = rtol
    cfg.energy.enabled = False
    cfg.time.max_steps = 1
    cfg.velocity_boundary = _free_slip_box()
    return cfg


def latent_pipe_analytic(T1, entropy_change, specific_heat):
    """Temperature below a transition crossed at constant speed: ``T1 / (1 - dS / C_p)``."""
    return T1 / (1.0 - entropy_change / specific_heat)


def latent_pipe_critical_velocity(density, gravity, diffusivity, clapeyron, T1, T2):
    """Inflow speed above which the conductive foot of the transition cannot keep up."""
    return density * gravity * diffusivity / (clapeyron * (T2 - T1))


def latent_pipe(width=5e3, cells_per_width=4, depth=200e3, transition_depth=100e3, velocity=5e-11,
                T1=1000.0, clapeyron=3e6, density_jump=200.0, density=3400.0, specific_heat=1000.0,
                conductivity=3.4, gravity=10.0, steady_tolerance=1e-7, max_steps=20000,
                cfl=2.0) -> RunConfig:
    """Material flows down a one-cell-wide column through a single phase transition.

    The transition (``tanh`` of half-width ``width``) releases latent heat;
    the temperature below it approaches ``T1 / (1 - dS / C_p)``.
    """
    h = width / cells_per_width
    n = int(round(depth / h))
    dS = clapeyron * density_jump / density ** 2
    T2 = latent_pipe_analytic(T1, dS, specific_heat)
    kappa = conductivity / (density * specific_heat)
    v_crit = latent_pipe_critical_velocity(density, gravity, kappa, clapeyron, T1, T2)
    if velocity >= v_crit:
        raise ValueError(f"inflow velocity {velocity:g} m/s exceeds the critical value {v_crit:g} m/s")
    cfg = RunConfig(name=f"latent_pipe_w{width:g}")
    cfg.geometry.x_extent = (0.0, h)
    cfg.geometry.y_extent = (0.0, depth)
    cfg.geometry.subdivisions = (1, n)
    cfg.geometry.global_refinement = 0
    cfg.material.model = "latent_heat"
    cfg.material.parameters = {"density": density, "specific_heat": specific_heat,
                               "conductivity": conductivity, "gravity_magnitude": gravity,
                               "transition_depth0": transition_depth, "transition_width": width,
                               "transition_clapeyron": clapeyron, "transition_temperature0": T1,
                               "transition_density_jump": density_jump}
    cfg.formulation = FormulationConfig("BA")
    cfg.stokes.method = "direct"
    cfg.stokes.pressure_scaling = True
    cfg.energy.internal_heating = False
    cfg.energy.shear_heating = False
    cfg.energy.adiabatic_heating = False
    cfg.energy.latent_heat = True
    cfg.time.cfl = cfl
    cfg.time.max_steps = max_steps
    cfg.time.steady_tolerance = steady_tolerance
    cfg.time.steady_quantity = "T_max"
    cfg.velocity_boundary = {"left": "free_slip", "right": "free_slip", "bottom": "open",
                             "top": f"prescribed 0 ; {-velocity!r}"}
    cfg.constants = {"T1": T1}
    cfg.temperature_boundary = {"top": "T1"}
    cfg.initial = {"temperature": "T1"}
    cfg.info = {"T1": T1, "T2_analytic": T2, "entropy_change": dS, "critical_velocity": v_crit,
                "velocity": velocity, "cells_per_width": cells_per_width}
    return cfg


def finite_strain(resolution_level=4, max_steps=50, adaptive=True) -> RunConfig:
    """Thermal convection in a 3:1 box tracking the deformation gradient as four fields."""
    cfg = RunConfig(name="finite_strain")
    cfg.geometry.x_extent = (0.0, 8.7e6)
    cfg.geometry.y_extent = (0.0, 2.9e6)
    cfg.geometry.subdivisions = (3, 1)
    cfg.geometry.global_refinement = resolution_level
    cfg.material.model = "finite_strain"
    cfg.formulation = FormulationConfig("BA")
    cfg.stokes.method = "gmres"
    cfg.energy.internal_heating = False
    cfg.energy.adiabatic_heating = False
    cfg.energy.shear_heating = False
    cfg.composition.finite_strain = True
    cfg.time.max_steps = max_steps
    cfg.velocity_boundary = _free_slip_box()
    cfg.constants = {"H": 2.9e6}
    cfg.temperature_boundary = {"top": "273", "bottom": "3773"}
    cfg.initial = {"temperature": "273 + 3500 * depth / H + 100 * cos(pi * x / H) * sin(pi * depth / H)"}
    cfg.info = {"nusselt_delta_T": 3500.0}
    if adaptive:
        cfg.amr.every = 10
        cfg.amr.criteria = ("kelly:T", "gradient:viscosity")
        cfg.amr.refine_fraction = 0.2
        cfg.amr.coarsen_fraction = 0.1
        cfg.amr.min_level = max(resolution_level - 1, 0)
        cfg.amr.max_level = resolution_level + 1
    return cfg


def mms_stokes(pressure_space="Q1", resolutions=(16, 32, 64, 128)) -> RunConfig:
    cfg = RunConfig(name=f"mms_stokes_{pressure_space}", scenario="mms_stokes")
    cfg.spaces.pressure_element = pressure_space
    cfg.stokes.method = "gmres"
    cfg.info = {"resolutions": ", ".join(str(r) for r in resolutions)}
    return cfg


def mms_energy(resolution=32, steps=(5, 10, 20, 40)) -> RunConfig:
    cfg = RunConfig(name="mms_energy", scenario="mms_energy")
    cfg.geometry.global_refinement = int(round(np.log2(resolution)))
    cfg.info = {"steps": ", ".join(str(s) for s in steps)}
    return cfg


def setup_benchmark(name: str, **parameters) -> RunConfig:
    """Configuration of a named benchmark; keyword arguments override its defaults."""
    table = {"king": king, "arctan": arctan, "sinker": sinker, "latent_pipe": latent_pipe,
             "finite_strain": finite_strain, "mms_stokes": mms_stokes, "mms_energy": mms_energy}
    if name not in table:
        raise ValueError(f"unknown benchmark {name!r}; choose from {', '.join(BENCHMARKS)}")
    return table[name](**parameters)
