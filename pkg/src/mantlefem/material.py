"""Material models, per-cell averaging and phase-transition helpers.

A material model maps per-quadrature-point inputs (position, temperature,
pressure, strain rate, compositions) to the coefficients of the Stokes and
energy equations.  Inputs and outputs are arrays of shape
``(n_cells, n_quadrature_points)``.

Depth is measured downward from the top of the domain, ``depth = y_top - y``,
and gravity points in the ``-y`` direction.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

AVERAGING_SCHEMES = ("none", "arithmetic", "harmonic", "geometric", "max",
                     "project_q1", "project_q1_limited")


@dataclass
class MaterialInputs:
    position: np.ndarray
    temperature: np.ndarray
    pressure: np.ndarray
    strain_rate: np.ndarray | None = None
    composition: np.ndarray | None = None
    #: pressure of the previous solution, used for the pressure term in ALA buoyancy
    previous_pressure: np.ndarray | None = None


@dataclass
class MaterialOutputs:
    """Coefficient bundle at quadrature points.

    ``compressibility`` is ``d rho / d p`` and ``thermal_density_derivative`` is
    ``d rho / d T``.  ``reference_density`` and its gradient are set by models
    that carry an adiabatic reference profile.
    """

    viscosity: np.ndarray
    density: np.ndarray
    specific_heat: np.ndarray
    conductivity: np.ndarray
    thermal_expansivity: np.ndarray
    compressibility: np.ndarray
    thermal_density_derivative: np.ndarray
    entropy_derivative_T: np.ndarray
    entropy_derivative_p: np.ndarray
    heating: np.ndarray
    reference_density: np.ndarray | None = None
    reference_density_gradient: np.ndarray | None = None

    def scalar_fields(self):
        return [f.name for f in fields(self)
                if f.name != "reference_density_gradient" and getattr(self, f.name) is not None]

    def validate(self):
        if np.any(self.viscosity <= 0):
            raise ValueError("viscosity must be positive")
        if np.any(self.density <= 0):
            raise ValueError("density must be positive")
        if np.any(self.specific_heat <= 0):
            raise ValueError("specific heat must be positive")
        if np.any(self.conductivity < 0):
            raise ValueError("conductivity must be nonnegative")
        return self

    def energy_density(self, approximation: str) -> np.ndarray:
        """Density multiplying ``C_p`` in the energy equation."""
        if approximation in ("TALA", "ALA") and self.reference_density is not None:
            return self.reference_density
        return self.density


def _filled(shape, value):
    return np.full(shape, float(value))


def make_outputs(shape, **kw) -> MaterialOutputs:
    """Outputs with scalar/array entries broadcast to ``shape``; unset fields default to 0 or 1."""
    defaults = dict(viscosity=1.0, density=1.0, specific_heat=1.0, conductivity=1.0,
                    thermal_expansivity=0.0, compressibility=0.0, thermal_density_derivative=0.0,
                    entropy_derivative_T=0.0, entropy_derivative_p=0.0, heating=0.0)
    defaults.update(kw)
    out = {}
    for k, v in defaults.items():
        if v is None or k == "reference_density_gradient":
            out[k] = v
        else:
            out[k] = np.broadcast_to(np.asarray(v, dtype=float), shape).copy()
    return MaterialOutputs(**out)


# ----------------------------------------------------------------------
# averaging
def _q1_projector(ref_points):
    """Least-squares fit of a bilinear function to point values, re-evaluated at the points."""
    x, y = ref_points[:, 0], ref_points[:, 1]
    V = np.column_stack([np.ones_like(x), x, y, x * y])
    return V @ np.linalg.pinv(V)


def average_cell(values, scheme: str, ref_points=None) -> np.ndarray:
    """Average per-cell quadrature values ``values[cell, q]``.

    ``ref_points`` (reference coordinates of the quadrature points) are
    required by the projection schemes.
    """
    v = np.asarray(values, dtype=float)
    squeeze = v.ndim == 1
    v = np.atleast_2d(v)
    if scheme not in AVERAGING_SCHEMES:
        raise ValueError(f"unknown averaging scheme {scheme!r}")
    if scheme in ("harmonic", "geometric") and np.any(v <= 0):
        raise ValueError(f"{scheme} averaging needs strictly positive values")
    nq = v.shape[1]
    if scheme == "none":
        out = v.copy()
    elif scheme == "arithmetic":
        out = np.repeat(v.mean(axis=1, keepdims=True), nq, axis=1)
    elif scheme == "harmonic":
        out = np.repeat(1.0 / np.mean(1.0 / v, axis=1, keepdims=True), nq, axis=1)
    elif scheme == "geometric":
        out = np.repeat(np.exp(np.mean(np.log(v), axis=1, keepdims=True)), nq, axis=1)
    elif scheme == "max":
        out = np.repeat(v.max(axis=1, keepdims=True), nq, axis=1)
    else:
        if ref_points is None:
            raise ValueError("projection averaging needs the quadrature point locations")
        out = v @ _q1_projector(np.asarray(ref_points)).T
        if scheme == "project_q1_limited":
            out = np.clip(out, v.min(axis=1, keepdims=True), v.max(axis=1, keepdims=True))
    return out[0] if squeeze else out


def average_outputs(outputs: MaterialOutputs, scheme: str, ref_points=None) -> MaterialOutputs:
    """Apply one averaging scheme to every scalar coefficient of the bundle.

    Harmonic and geometric means are undefined for fields that are not
    strictly positive on a cell (e.g. a zero expansivity or a signed
    derivative); such cells fall back to the arithmetic mean for that field.
    """
    if scheme == "none":
        return outputs
    new = {}
    for name in outputs.scalar_fields():
        v = getattr(outputs, name)
        if scheme in ("harmonic", "geometric"):
            positive = np.all(v > 0, axis=1)
            res = average_cell(v, "arithmetic")
            if positive.any():
                res[positive] = average_cell(v[positive], scheme)
        else:
            res = average_cell(v, scheme, ref_points)
        new[name] = res
    g = outputs.reference_density_gradient
    if g is not None:
        sch = "arithmetic" if scheme in ("harmonic", "geometric") else scheme
        new["reference_density_gradient"] = np.stack(
            [average_cell(g[..., k], sch, ref_points) for k in range(g.shape[-1])], axis=-1)
    return replace(outputs, **new)


# ----------------------------------------------------------------------
# phase transitions
@dataclass
class PhaseTransition:
    """A univariant transition smoothed by a hyperbolic tangent.

    ``X`` is the fraction transformed to the denser phase and increases
    with depth.  The transition depth moves with temperature along the
    Clapeyron slope: ``z_tr(T) = depth0 + clapeyron * (T - temperature0) / (rho g)``.
    """

    depth0: float
    width: float
    clapeyron: float = 0.0
    temperature0: float = 0.0
    density_jump: float = 0.0
    density: float = 1.0
    gravity: float = 1.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("transition width must be positive")

    @property
    def entropy_change(self) -> float:
        """``Delta S = gamma * Delta rho / rho^2``."""
        return self.clapeyron * self.density_jump / self.density ** 2


def phase_function(depth, temperature, transition: PhaseTransition):
    """Return ``X``, ``dX/dT`` and ``dX/dz`` (``z`` = depth)."""
    tr = transition
    rg = tr.density * tr.gravity
    z_tr = tr.depth0 + tr.clapeyron * (np.asarray(temperature, dtype=float) - tr.temperature0) / rg
    arg = (np.asarray(depth, dtype=float) - z_tr) / tr.width
    th = np.tanh(arg)
    X = 0.5 * (1.0 + th)
    dXdz = 0.5 * (1.0 - th ** 2) / tr.width
    dXdT = -dXdz * tr.clapeyron / rg
    return X, dXdT, dXdz


def entropy_derivatives(dXdT, dXdp, clapeyron, density_jump, density):
    """``(dS/dT, dS/dp) = gamma * drho / rho^2 * (dX/dT, dX/dp)``."""
    density = np.asarray(density, dtype=float)
    if np.any(density <= 0):
        raise ValueError("density must be positive")
    factor = clapeyron * density_jump / density ** 2
    return factor * np.asarray(dXdT, dtype=float), factor * np.asarray(dXdp, dtype=float)


# ----------------------------------------------------------------------
# models
class MaterialModel:
    """Base class: subclasses implement :meth:`evaluate`.

    Attributes
    ----------
    approximation : 'BA', 'TALA', 'ALA' or 'full'
    gravity_magnitude : |g|, pointing in -y
    """

    approximation = "BA"
    gravity_magnitude = 1.0
    top = 1.0  # y coordinate of the surface, set by the driver from the geometry

    def depth(self, position):
        return self.top - position[..., 1]

    def gravity(self, position):
        g = np.zeros(np.shape(position))
        g[..., 1] = -self.gravity_magnitude
        return g

    def evaluate(self, inputs: MaterialInputs) -> MaterialOutputs:  # pragma: no cover - abstract
        raise NotImplementedError

    # reference profile (models without one return None)
    def reference_density(self, position):
        return None

    def reference_temperature(self, position):
        return None

    def reference_pressure(self, position):
        return None

    def describe(self) -> dict:
        return {k: v for k, v in vars(self).items() if not k.startswith("_")}


@dataclass
class ConstantModel(MaterialModel):
    """Constant coefficients with linear thermal buoyancy (Boussinesq)."""

    viscosity: float = 1.0
    density: float = 1.0
    specific_heat: float = 1.0
    conductivity: float = 1.0
    thermal_expansivity: float = 0.0
    reference_temperature_value: float = 0.0
    heating: float = 0.0
    gravity_magnitude: float = 1.0
    approximation: str = "BA"
    top: float = 1.0

    def evaluate(self, inputs):
        T = inputs.temperature
        rho = self.density * (1.0 - self.thermal_expansivity * (T - self.reference_temperature_value))
        return make_outputs(T.shape, viscosity=self.viscosity, density=rho,
                            specific_heat=self.specific_heat, conductivity=self.conductivity,
                            thermal_expansivity=self.thermal_expansivity,
                            thermal_density_derivative=-self.density * self.thermal_expansivity,
                            heating=self.heating)


@dataclass
class KingModel(MaterialModel):
    """Nondimensional compressible convection in a unit box.

    All constants are one except ``alpha = Di`` and ``eta = Di / Ra``.  The
    reference state is ``rho_ref = exp(Di * depth / gamma)`` and
    ``T_ref = T_top * exp(Di * depth)``.  Buoyancy uses
    ``rho = rho_ref (1 - alpha (T - T_ref))``; under ALA the dynamic pressure
    adds ``(Di / gamma) (p - p_ref)`` with ``p`` taken from the previous
    solution.  Under BA with ``Di = 0`` the classical scaling ``alpha = 1``,
    ``eta = 1/Ra`` is used.
    """

    Di: float = 0.25
    Ra: float = 1e4
    approximation: str = "ALA"
    gamma: float = 1.0
    T_top: float = 273.0 / 3000.0
    gravity_magnitude: float = 1.0
    top: float = 1.0

    def __post_init__(self):
        if self.approximation not in ("BA", "TALA", "ALA"):
            raise ValueError("King model supports BA, TALA and ALA")
        if self.Di <= 0 and self.approximation != "BA":
            raise ValueError("compressible approximations need Di > 0")

    @property
    def alpha(self):
        return self.Di if self.Di > 0 else 1.0

    @property
    def eta(self):
        return self.Di / self.Ra if self.Di > 0 else 1.0 / self.Ra

    def reference_density(self, position):
        if self.approximation == "BA":
            return np.ones(np.shape(position)[:-1])
        return np.exp(self.Di * self.depth(position) / self.gamma)

    def reference_density_gradient(self, position):
        g = np.zeros(np.shape(position))
        if self.approximation != "BA":
            # d/dy = -d/d(depth)
            g[..., 1] = -(self.Di / self.gamma) * self.reference_density(position)
        return g

    def reference_temperature(self, position):
        if self.approximation == "BA":
            return np.full(np.shape(position)[:-1], self.T_top)
        return self.T_top * np.exp(self.Di * self.depth(position))

    def reference_pressure(self, position):
        d = self.depth(position)
        if self.approximation == "BA" or self.Di == 0:
            return self.gravity_magnitude * d
        return self.gravity_magnitude * (self.gamma / self.Di) * (np.exp(self.Di * d / self.gamma) - 1.0)

    def evaluate(self, inputs):
        x = inputs.position
        T = inputs.temperature
        rbar = self.reference_density(x)
        Tbar = self.reference_temperature(x)
        alpha = self.alpha
        rho = rbar * (1.0 - alpha * (T - Tbar))
        drho_dp = 0.0
        if self.approximation == "ALA":
            drho_dp = self.Di / self.gamma
            p = inputs.previous_pressure if inputs.previous_pressure is not None else inputs.pressure
            if p is not None:
                rho = rho + drho_dp * (p - self.reference_pressure(x))
        return make_outputs(T.shape, viscosity=self.eta, density=rho, specific_heat=1.0,
                            conductivity=1.0, thermal_expansivity=alpha,
                            compressibility=drho_dp, thermal_density_derivative=-alpha * rbar,
                            reference_density=rbar,
                            reference_density_gradient=self.reference_density_gradient(x))


@dataclass
class ArctanModel(MaterialModel):
    """Truncated anelastic model with ``rho_ref(z) = 1.6 + arctan(c (z - 0.5))``, ``z`` = depth.

    ``alpha = Di``, ``eta = Di / Ra``; temperature enters only through the
    linear thermal term around ``T_ref = 0``.
    """

    c: float = 0.0
    Di: float = 0.1
    Ra: float = 1e4
    approximation: str = "TALA"
    gravity_magnitude: float = 1.0
    top: float = 1.0

    def reference_density(self, position):
        return 1.6 + np.arctan(self.c * (self.depth(position) - 0.5))

    def reference_density_gradient(self, position):
        s = self.c * (self.depth(position) - 0.5)
        g = np.zeros(np.shape(position))
        g[..., 1] = -self.c / (1.0 + s * s)
        return g

    def reference_temperature(self, position):
        return np.zeros(np.shape(position)[:-1])

    def evaluate(self, inputs):
        x, T = inputs.position, inputs.temperature
        rbar = self.reference_density(x)
        alpha = self.Di
        return make_outputs(T.shape, viscosity=self.Di / self.Ra, density=rbar * (1.0 - alpha * T),
                            thermal_expansivity=alpha, thermal_density_derivative=-alpha * rbar,
                            reference_density=rbar,
                            reference_density_gradient=self.reference_density_gradient(x))


@dataclass
class SinkerModel(MaterialModel):
    """Heavy, stiff disk in a light, weak box (incompressible)."""

    center: tuple = (0.5, 0.5)
    radius: float = 0.125
    density_inside: float = 10.0
    viscosity_inside: float = 1e6
    density_outside: float = 1.0
    viscosity_outside: float = 1.0
    gravity_magnitude: float = 1.0
    top: float = 1.0

    def inside(self, position):
        d = position - np.asarray(self.center)
        return np.einsum("...i,...i->...", d, d) <= self.radius ** 2

    def evaluate(self, inputs):
        inside = self.inside(inputs.position)
        shape = inside.shape
        return make_outputs(shape,
                            viscosity=np.where(inside, self.viscosity_inside, self.viscosity_outside),
                            density=np.where(inside, self.density_inside, self.density_outside))


@dataclass
class LatentHeatModel(MaterialModel):
    """Single phase transition with latent heat, for the 1D pipe benchmark.

    Density in the energy equation is the constant ``density``; the density
    jump only enters the entropy change ``Delta S = gamma Delta rho / rho^2``.
    ``dX/dp = (dX/dz) / (rho g)``.
    """

    transition: PhaseTransition = None
    density: float = 3400.0
    specific_heat: float = 1000.0
    conductivity: float = 3.4
    viscosity: float = 1e21
    gravity_magnitude: float = 10.0
    top: float = 1.0
    approximation: str = "BA"

    def evaluate(self, inputs):
        x, T = inputs.position, inputs.temperature
        tr = self.transition
        X, dXdT, dXdz = phase_function(self.depth(x), T, tr)
        dXdp = dXdz / (self.density * self.gravity_magnitude)
        dSdT, dSdp = entropy_derivatives(dXdT, dXdp, tr.clapeyron, tr.density_jump, self.density)
        return make_outputs(T.shape, viscosity=self.viscosity, density=self.density,
                            specific_heat=self.specific_heat, conductivity=self.conductivity,
                            entropy_derivative_T=dSdT, entropy_derivative_p=dSdp)


@dataclass
class FiniteStrainModel(MaterialModel):
    """Thermal convection with ``eta = eta0 exp(-E (T - T_ref)/T_ref)``, ``rho = rho0 (1 - alpha (T - T_ref))``."""

    rho0: float = 3400.0
    alpha: float = 2e-5
    T_ref: float = 1600.0
    conductivity: float = 4.7
    gravity_magnitude: float = 9.81
    eta0: float = 5e21
    activation: float = 7.0
    specific_heat: float = 1250.0
    top: float = 2.9e6

    def evaluate(self, inputs):
        T = inputs.temperature
        eta = self.eta0 * np.exp(-self.activation * (T - self.T_ref) / self.T_ref)
        return make_outputs(T.shape, viscosity=eta, density=self.rho0 * (1 - self.alpha * (T - self.T_ref)),
                            specific_heat=self.specific_heat, conductivity=self.conductivity,
                            thermal_expansivity=self.alpha,
                            thermal_density_derivative=-self.rho0 * self.alpha)


@dataclass
class LayeredPhaseModel(MaterialModel):
    """Temperature-dependent viscosity with prefactor and density jumps at given depths.

    ``eta = eta0[layer] exp(-E (T - T_ref) / T_ref)`` and
    ``rho = rho0 (1 + beta p)(1 - alpha (T - T_ref)) + sum of jumps above``.
    """

    interface_depths: tuple = (410e3, 660e3)
    eta0: tuple = (1e21, 1e22, 1e23)
    density_jumps: tuple = (100.0, 200.0)
    activation: float = 15.0
    T_ref: float = 1600.0
    rho0: float = 3300.0
    compressibility_coefficient: float = 5.124e-12
    alpha: float = 4e-5
    specific_heat: float = 1250.0
    conductivity: float = 4.7
    gravity_magnitude: float = 9.81
    top: float = 2.89e6

    def layer(self, position):
        return np.searchsorted(np.asarray(self.interface_depths), self.depth(position))

    def evaluate(self, inputs):
        x, T = inputs.position, inputs.temperature
        p = inputs.pressure if inputs.pressure is not None else np.zeros_like(T)
        lay = self.layer(x)
        eta = np.asarray(self.eta0)[lay] * np.exp(-self.activation * (T - self.T_ref) / self.T_ref)
        jumps = np.concatenate([[0.0], np.cumsum(self.density_jumps)])[lay]
        thermal = 1 - self.alpha * (T - self.T_ref)
        rho = self.rho0 * (1 + self.compressibility_coefficient * p) * thermal + jumps
        return make_outputs(T.shape, viscosity=eta, density=rho, specific_heat=self.specific_heat,
                            conductivity=self.conductivity, thermal_expansivity=self.alpha,
                            compressibility=self.rho0 * self.compressibility_coefficient * thermal,
                            thermal_density_derivative=-self.rho0 * self.alpha
                            * (1 + self.compressibility_coefficient * p))


@dataclass
class ViscosityClamp(MaterialModel):
    """Wrapper restricting the viscosity of another model to ``[minimum, maximum]``."""

    model: MaterialModel = None
    minimum: float = 0.0
    maximum: float = np.inf

    def __getattr__(self, name):
        # delegate profile/gravity attributes to the wrapped model
        if name == "model":
            raise AttributeError(name)
        return getattr(self.model, name)

    @property
    def approximation(self):
        return self.model.approximation

    @property
    def gravity_magnitude(self):
        return self.model.gravity_magnitude

    @property
    def top(self):
        return self.model.top

    def depth(self, position):
        return self.model.depth(position)

    def gravity(self, position):
        return self.model.gravity(position)

    def reference_density(self, position):
        return self.model.reference_density(position)

    def reference_temperature(self, position):
        return self.model.reference_temperature(position)

    def reference_pressure(self, position):
        return self.model.reference_pressure(position)

    def evaluate(self, inputs):
        out = self.model.evaluate(inputs)
        return replace(out, viscosity=np.clip(out.viscosity, self.minimum, self.maximum))


MODELS = {
    "constant": ConstantModel,
    "king": KingModel,
    "arctan": ArctanModel,
    "sinker": SinkerModel,
    "latent_heat": LatentHeatModel,
    "finite_strain": FiniteStrainModel,
    "layered_phase": LayeredPhaseModel,
}


def evaluate(model: MaterialModel, inputs: MaterialInputs) -> MaterialOutputs:
    """Evaluate a model and check the output invariants."""
    return model.evaluate(inputs).validate()
