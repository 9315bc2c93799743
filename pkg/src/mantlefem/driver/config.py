"""Run configuration: nested dataclasses parsed from sectioned ``key = value`` text.

Example::

    [geometry]
    x_extent = 0, 1
    subdivisions = 1, 1
    global_refinement = 5

    [material]
    model = king
    Di = 0.25          # unknown keys in [material] are model parameters

    [temperature_boundary]
    top = 0.091
    bottom = 1.091     # sides not listed are insulating

Every field has a default; :meth:`RunConfig.echo` prints the fully
populated configuration in the same format, which can be parsed back.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from ..stokes import FormulationConfig, SolverConfig


@dataclass
class GeometryConfig:
    x_extent: tuple = (0.0, 1.0)
    y_extent: tuple = (0.0, 1.0)
    subdivisions: tuple = (1, 1)
    global_refinement: int = 4


@dataclass
class SpacesConfig:
    pressure_element: str = "Q1"
    temperature_degree: int = 2
    quadrature_degree: int = 5


@dataclass
class MaterialConfig:
    model: str = "constant"
    averaging: str = "none"
    viscosity_minimum: float = 0.0
    viscosity_maximum: float = float("inf")
    parameters: dict = field(default_factory=dict)


@dataclass
class StokesConfig:
    """Linear solver settings plus the nonlinear (Picard) controls."""

    method: str = "gmres"
    rtol: float = 1e-7
    restart: int = 50
    maxiter: int = 2000
    inner_preconditioner: str = "amg"
    inner_A_tol: float = 1e-2
    inner_S_tol: float = 1e-6
    pressure_scaling: bool = True
    nonlinear_iterations: int = 1
    nonlinear_tolerance: float = 1e-6
    pressure_normalization: str = "volume"

    def solver(self) -> SolverConfig:
        return SolverConfig(method=self.method, rtol=self.rtol, restart=self.restart,
                            maxiter=self.maxiter, inner_preconditioner=self.inner_preconditioner,
                            inner_A_tol=self.inner_A_tol, inner_S_tol=self.inner_S_tol,
                            pressure_scaling=self.pressure_scaling)


@dataclass
class EnergyConfig:
    enabled: bool = True
    internal_heating: bool = True
    shear_heating: bool = True
    adiabatic_heating: bool = True
    latent_heat: bool = True
    stabilization: bool = True
    stabilization_beta: float = 0.052
    stabilization_cR: float = 0.11
    rtol: float = 1e-10


@dataclass
class TimeConfig:
    cfl: float = 1.0
    end_time: float = float("inf")
    max_steps: int = 100
    dt_max: float = float("inf")
    steady_tolerance: float = 0.0
    steady_window: int = 50
    steady_quantity: str = "Nu"


@dataclass
class AMRConfig:
    every: int = 0
    refine_fraction: float = 0.3
    coarsen_fraction: float = 0.05
    criteria: tuple = ("kelly:T",)
    scaling: str = "max"
    mode: str = "max"
    min_level: int = 0
    max_level: int = -1
    initial_cycles: int = 0


@dataclass
class OutputConfig:
    directory: str = "output"
    statistics_file: str = "statistics.csv"
    vtk_every: int = 0
    log: bool = True


@dataclass
class CompositionConfig:
    fields: tuple = ()
    finite_strain: bool = False
    stabilization: bool = True


@dataclass
class RunConfig:
    """Everything needed to run a simulation.

    ``velocity_boundary`` maps sides to ``no_slip``, ``free_slip``, ``open``
    or ``prescribed <ux> ; <uz>`` (expressions); ``temperature_boundary``
    maps sides to an expression or ``insulating``; ``initial`` holds
    ``temperature`` and one expression per compositional field.
    ``scenario`` selects the time loop (``time_loop``) or a convergence study
    (``mms_stokes``, ``mms_energy``).
    """

    name: str = "run"
    scenario: str = "time_loop"
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    spaces: SpacesConfig = field(default_factory=SpacesConfig)
    material: MaterialConfig = field(default_factory=MaterialConfig)
    formulation: FormulationConfig = field(default_factory=FormulationConfig)
    stokes: StokesConfig = field(default_factory=StokesConfig)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    amr: AMRConfig = field(default_factory=AMRConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    composition: CompositionConfig = field(default_factory=CompositionConfig)
    velocity_boundary: dict = field(default_factory=lambda: {s: "no_slip" for s in
                                                             ("left", "right", "bottom", "top")})
    temperature_boundary: dict = field(default_factory=dict)
    initial: dict = field(default_factory=lambda: {"temperature": "0"})
    constants: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    # ------------------------------------------------------------------
    def echo(self) -> str:
        """The fully populated configuration in the parseable text format."""
        lines = ["[run]", f"name = {self.name}", f"scenario = {self.scenario}"]
        for sec in _SECTIONS:
            obj = getattr(self, sec)
            lines.append("")
            lines.append(f"[{sec}]")
            for f in dataclasses.fields(obj):
                val = getattr(obj, f.name)
                if f.name == "parameters":
                    continue
                lines.append(f"{f.name} = {_format(val)}")
            if sec == "material":
                for k, v in self.material.parameters.items():
                    lines.append(f"{k} = {_format(v)}")
        for sec in _DICT_SECTIONS:
            d = getattr(self, sec)
            lines.append("")
            lines.append(f"[{sec}]")
            for k, v in d.items():
                lines.append(f"{k} = {_format(v)}")
        return "\n".join(lines) + "\n"


_SECTIONS = ("geometry", "spaces", "material", "formulation", "stokes", "energy", "time", "amr",
             "output", "composition")
_DICT_SECTIONS = ("velocity_boundary", "temperature_boundary", "initial", "constants", "info")


def _format(v):
    if isinstance(v, (tuple, list)):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v) if np.isfinite(v) else ("inf" if v > 0 else "-inf")
    return str(v)


def _parse_scalar(text):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def _coerce(text, default):
    """Convert text to the type of the default value."""
    if isinstance(default, bool):
        v = _parse_scalar(text)
        if not isinstance(v, bool):
            raise ValueError(f"expected a boolean, got {text!r}")
        return v
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if default and all(isinstance(d, (int, float)) for d in default):
            kind = int if all(isinstance(d, int) and not isinstance(d, bool) for d in default) else float
            return tuple(kind(p) for p in parts)
        return tuple(parts)
    return text.strip()


def parse_config(text: str) -> RunConfig:
    """Parse configuration text (see module docstring)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",),
                                   interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    cfg = RunConfig()
    for sec in cp.sections():
        items = dict(cp.items(sec))
        if sec == "run":
            for k, v in items.items():
                if k not in ("name", "scenario"):
                    raise ValueError(f"unknown key {k!r} in [run]")
                setattr(cfg, k, v)
        elif sec in _SECTIONS:
            obj = getattr(cfg, sec)
            names = {f.name: f for f in dataclasses.fields(obj)}
            updates = {}
            for k, v in items.items():
                if k in names and k != "parameters":
                    updates[k] = _coerce(v, getattr(obj, k))
                elif sec == "material":
                    obj.parameters[k] = _parse_scalar(v)
                else:
                    raise ValueError(f"unknown key {k!r} in [{sec}]")
            if sec == "formulation":
                setattr(cfg, sec, dataclasses.replace(obj, **updates))
            else:
                for k, v in updates.items():
                    setattr(obj, k, v)
        elif sec in _DICT_SECTIONS:
            d = getattr(cfg, sec)
            for k, v in items.items():
                d[k] = _parse_scalar(v) if sec in ("constants", "info") else v.strip()
        else:
            raise ValueError(f"unknown section [{sec}]")
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
