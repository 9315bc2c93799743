"""Implicit BDF-2 temperature equation with latent heat and artificial viscosity.

The assembled equation is::

    (rho C_p - rho T* dS/dT) (BDF2(T) + u . grad T) - div((k + nu_h) grad T)
        = rho H + tau : eps  +  (alpha + rho dS/dp) T (u . rho g)

with the adiabatic/latent term on the right treated implicitly (it is
linear in ``T``) and ``grad p`` approximated by ``rho g``.  ``rho`` is the
reference density for anelastic approximations.  The same machinery
advances compositional fields (unit capacity, no physical diffusion).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import AffineConstraints, field_at_quadrature
from .fem.assembly import scatter_matrix, scatter_vector
from .krylov import SolverError, fgmres, pcg

STABILIZATION_BETA = 0.052
STABILIZATION_CR = 0.11


def bdf2_coefficients(dt, dt_prev=None):
    """Variable-step BDF-2 weights ``(a0, a1, a2)`` for ``(a0 T^{n+1} + a1 T^n + a2 T^{n-1}) / dt``.

    With no previous step this is backward Euler ``(1, -1, 0)``.
    """
    if dt_prev is None:
        return 1.0, -1.0, 0.0
    w = dt / dt_prev
    return (1 + 2 * w) / (1 + w), -(1 + w), w * w / (1 + w)


@dataclass
class BdfState:
    """Previous solutions (most recent first) and step sizes.

    ``dt = None`` requests the steady problem (no time derivative).
    """

    history: list = field(default_factory=list)
    dt: float | None = None
    dt_prev: float | None = None

    def coefficients(self):
        if self.dt is None:
            return None
        if len(self.history) >= 2 and self.dt_prev is not None:
            return bdf2_coefficients(self.dt, self.dt_prev)
        if len(self.history) < 1:
            raise ValueError("time-dependent solve needs at least one previous solution")
        return bdf2_coefficients(self.dt)

    def extrapolate(self):
        """Second-order extrapolation to the new time level (previous value at step 1)."""
        if len(self.history) >= 2 and self.dt_prev is not None and self.dt is not None:
            w = self.dt / self.dt_prev
            return (1 + w) * self.history[0] - w * self.history[1]
        return self.history[0]


@dataclass
class HeatingTerms:
    internal: bool = True
    shear: bool = True
    adiabatic: bool = True
    latent: bool = True


@dataclass(eq=False)
class TransportSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    constraints: AffineConstraints
    has_time_derivative: bool
    has_reaction: bool

    def reduced(self):
        c = self.constraints
        return c.condense_matrix(self.matrix), c.condense_rhs(self.rhs, self.matrix)


def assemble_transport(space, qd, capacity, velocity_q, diffusivity, reaction=None, source_q=None,
                       bdf: BdfState | None = None, constraints=None, source_increment_q=None):
    """Generic advection-diffusion-reaction assembly.

    ``capacity (c)``, ``diffusivity (D)``, ``reaction (R)``, ``source_q (f)`` are
    per-quadrature-point arrays of shape ``(n_cells, nq)``; ``diffusivity``
    may also be per cell.  The equation is
    ``c (dT/dt + u . grad T) - div(D grad T) - R T = f``.
    ``source_increment_q`` is added to the rhs as ``increment / dt`` (time
    integrated sources).
    """
    el = space.element
    phi = qd.shape_values(el)
    G = qd.shape_grads(el)
    JxW = qd.JxW
    n = space.n_dofs
    nodes = space.cell_nodes
    D = np.asarray(diffusivity, dtype=float)
    if D.ndim == 1:
        D = np.repeat(D[:, None], qd.n_points, axis=1)
    cap = np.broadcast_to(np.asarray(capacity, dtype=float), JxW.shape)
    local = np.einsum("cq,cqad,cqbd->cab", JxW * D, G, G, optimize=True)
    if velocity_q is not None:
        adv = np.einsum("cqd,cqbd->cqb", velocity_q, G, optimize=True)
        local += np.einsum("cq,qa,cqb->cab", JxW * cap, phi, adv, optimize=True)
    has_reaction = reaction is not None and np.any(reaction != 0)
    mass_w = np.zeros_like(JxW)
    coef = bdf.coefficients() if bdf is not None else None
    if coef is not None:
        mass_w = mass_w + JxW * cap * (coef[0] / bdf.dt)
    if has_reaction:
        mass_w = mass_w - JxW * reaction
    local += np.einsum("cq,qa,qb->cab", mass_w, phi, phi, optimize=True)
    K = scatter_matrix(nodes, nodes, local, (n, n))
    f = np.zeros(n)
    if source_q is not None:
        f += scatter_vector(nodes, np.einsum("cq,qa,cq->ca", JxW, phi, source_q), n)
    if source_increment_q is not None and bdf is not None and bdf.dt:
        f += scatter_vector(nodes, np.einsum("cq,qa,cq->ca", JxW, phi, source_increment_q / bdf.dt), n)
    if coef is not None:
        hist = np.zeros(qd.JxW.shape)
        for a, Th in zip(coef[1:], bdf.history[:2]):
            if a != 0.0:
                hist = hist + a * field_at_quadrature(space, Th, qd, gradients=False)[..., 0]
        f -= scatter_vector(nodes, np.einsum("cq,qa,cq->ca", JxW * cap / bdf.dt, phi, hist), n)
    if constraints is None:
        constraints = AffineConstraints(space)
    return TransportSystem(K, f, constraints, coef is not None, has_reaction)


def energy_coefficients(outputs, approximation, velocity_q, gravity_q, T_star_q=None,
                        heating: HeatingTerms | None = None, shear_heating_q=None):
    """Capacity, conductivity, reaction and source terms of the energy equation at quadrature points."""
    heating = heating or HeatingTerms()
    rho = outputs.energy_density(approximation)
    cap = rho * outputs.specific_heat
    if heating.latent and T_star_q is not None:
        cap = cap - rho * T_star_q * outputs.entropy_derivative_T
    reaction = np.zeros_like(cap)
    ug = np.einsum("cqd,cqd->cq", velocity_q, gravity_q) if velocity_q is not None else 0.0
    if heating.adiabatic:
        reaction = reaction + outputs.thermal_expansivity * rho * ug
    if heating.latent:
        reaction = reaction + rho * outputs.entropy_derivative_p * rho * ug
    source = np.zeros_like(cap)
    if heating.internal:
        source = source + rho * outputs.heating
    if heating.shear and shear_heating_q is not None:
        source = source + shear_heating_q
    return cap, outputs.conductivity, reaction, source


def assemble_energy(space, qd, outputs, approximation, velocity_q, gravity_q, bdf: BdfState | None,
                    constraints, heating: HeatingTerms | None = None, nu_h=None, shear_heating_q=None,
                    T_star_q=None):
    """Assemble the temperature system (see module docstring).

    ``nu_h`` is the per-cell artificial conductivity added to ``k``.
    """
    cap, k, reaction, source = energy_coefficients(outputs, approximation, velocity_q, gravity_q,
                                                   T_star_q, heating, shear_heating_q)
    D = k if nu_h is None else k + np.asarray(nu_h)[:, None]
    return assemble_transport(space, qd, cap, velocity_q, D, reaction, source, bdf, constraints)


def stabilization_viscosity(space, qd, history, velocity_q, capacity, conductivity, source_q=None,
                            dt_prev=None, beta=STABILIZATION_BETA, c_R=STABILIZATION_CR):
    """Per-cell artificial diffusivity ``nu_h = min(nu_max, nu_E)``.

    ``nu_max = beta * c * |u|_inf,K * h_K / p`` with ``c`` the heat capacity
    and ``h_K`` the cell diameter.  ``nu_E = c_R h_K^2 max_q |r| |T - T_m| / norm_E``
    uses the residual ``r`` of the equation evaluated with the two previous
    solutions (entropy ``E = (T - T_m)^2 / 2`` normalized by
    ``max |E - mean E|``).  Only ``nu_max`` is used until two previous
    solutions are available.
    """
    h = np.hypot(qd.h[:, 0], qd.h[:, 1])
    cap = np.broadcast_to(np.asarray(capacity, dtype=float), qd.JxW.shape)
    speed = np.zeros(qd.JxW.shape) if velocity_q is None else np.linalg.norm(velocity_q, axis=-1)
    nu_max = beta * h * np.max(cap * speed, axis=1) / space.degree
    if len(history) < 2 or dt_prev is None:
        return nu_max
    T1, T0 = history[0], history[1]
    v1, g1 = field_at_quadrature(space, T1, qd)
    v0, g0 = field_at_quadrature(space, T0, qd)
    Tm_q = 0.5 * (v1 + v0)[..., 0]
    grad = 0.5 * (g1 + g0)[..., 0, :]
    H = space.element.hessians(qd.ref_points)  # (nq, nl, 3)
    lap_ref = H[..., 0][None] / qd.h[:, None, None, 0] ** 2 + H[..., 1][None] / qd.h[:, None, None, 1] ** 2
    coef = 0.5 * (T1 + T0)[space.cell_nodes]
    lap = np.einsum("cqa,ca->cq", lap_ref, coef)
    k = np.broadcast_to(np.asarray(conductivity, dtype=float), qd.JxW.shape)
    r = cap * ((v1 - v0)[..., 0] / dt_prev)
    if velocity_q is not None:
        r = r + cap * np.einsum("cqd,cqd->cq", velocity_q, grad)
    r = r - k * lap
    if source_q is not None:
        r = r - source_q
    area = qd.JxW.sum()
    T_mean = np.sum(Tm_q * qd.JxW) / area
    E = 0.5 * (Tm_q - T_mean) ** 2
    norm_E = np.max(np.abs(E - np.sum(E * qd.JxW) / area))
    num = np.max(np.abs(r) * np.abs(Tm_q - T_mean), axis=1)
    if norm_E == 0.0:
        nu_E = np.zeros_like(nu_max)
    else:
        nu_E = c_R * h ** 2 * num / norm_E
    return np.minimum(nu_max, nu_E)


def solve_energy(system: TransportSystem, rtol=1e-10, maxiter=1000, method="gmres"):
    """Solve a transport system; returns the raw solution vector and the iteration count.

    ``method='cg'`` is only valid for symmetric systems (pure diffusion).
    Raises ``ValueError`` for a singular pure-Neumann steady problem.
    """
    c = system.constraints
    if not system.has_time_derivative and not system.has_reaction and len(c.dirichlet_dofs) == 0:
        # constants are in the kernel of the operator unless advection removes them
        ones = np.ones(system.matrix.shape[0])
        if np.linalg.norm(system.matrix @ ones) <= 1e-12 * abs(system.matrix).max() * len(ones):
            raise ValueError("singular system: steady problem without Dirichlet data or reaction "
                             "has constants in its null space")
    K, f = system.reduced()
    K = K.tocsc()
    if f.size == 0:
        return c.distribute(np.zeros(0)), 0
    if method == "direct":
        return c.distribute(spla.spsolve(K, f)), 1
    if method == "cg":
        d = K.diagonal()
        res = pcg(K, f, lambda v: v / d, rtol=rtol, maxiter=maxiter * 10)
    else:
        try:
            ilu = spla.spilu(K, drop_tol=1e-6, fill_factor=20)
            M = ilu.solve
        except RuntimeError:
            d = K.diagonal()
            M = lambda v: v / d  # noqa: E731
        res = fgmres(K, f, M, rtol=rtol, restart=100, maxiter=maxiter)
    if not res.converged:
        raise SolverError(f"energy solve did not converge (residual {res.residual:.3e})")
    return c.distribute(res.x), res.iterations
