"""Compressible Stokes system: assembly, compatibility correction and solvers.

Weak form, with ``tau(u) = 2 eta (eps(u) - 1/3 (div u) I)``::

    (tau(u), eps(v)) - (p, div v) = (rho g, v)
    -(q, div u) - (q, kappa . u) = 0                    implicit strategy
    -(q, div u) = (q, kappa . u* + delta)               explicit strategy

with the compressibility coefficient
``kappa = (drho/dp) g + (1/rho*) (drho/dT) grad T*`` (or ``grad rho_ref / rho_ref``
for anelastic models with a prescribed reference profile).  The deviatoric
``1/3`` term is only present for compressible approximations.

Blocks are stored in the raw (unconstrained) numbering; :class:`StokesSystem`
produces the constrained and pressure-scaled saddle-point operator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import AffineConstraints, CellQuadrature, FunctionSpace, field_at_quadrature, mass_vector
from .fem.assembly import scatter_matrix, scatter_vector, symmetric_within
from .krylov import SolverError, fgmres, pcg

SIDES = ("left", "right", "bottom", "top")
APPROXIMATIONS = ("BA", "TALA", "ALA", "full")
MASS_STRATEGIES = ("incompressible", "implicit", "explicit")


@dataclass
class FormulationConfig:
    """Which approximation of the equations and which mass-conservation treatment.

    ``reference_profile`` is ``'adiabatic'`` (use the model's reference density
    profile for ``kappa``) or ``'previous'`` (use the density derivatives and
    the extrapolated previous temperature).
    """

    approximation: str = "BA"
    mass_strategy: str = "incompressible"
    reference_profile: str = "adiabatic"

    def __post_init__(self):
        if self.approximation not in APPROXIMATIONS:
            raise ValueError(f"unknown approximation {self.approximation!r}")
        if self.mass_strategy not in MASS_STRATEGIES:
            raise ValueError(f"unknown mass strategy {self.mass_strategy!r}")
        if self.approximation == "BA":
            self.mass_strategy = "incompressible"
        if self.reference_profile not in ("adiabatic", "previous"):
            raise ValueError("reference_profile must be 'adiabatic' or 'previous'")

    @property
    def compressible(self) -> bool:
        return self.approximation != "BA"


@dataclass
class SolverConfig:
    """Stokes solver controls.

    ``method`` is ``'gmres'`` (block-preconditioned flexible GMRES) or
    ``'direct'``.  ``inner_preconditioner`` selects the preconditioner of the
    inner CG solve for the velocity block: ``'amg'``, ``'ilu'``, ``'ssor'`` or
    ``'direct'``.
    """

    method: str = "gmres"
    rtol: float = 1e-7
    restart: int = 50
    maxiter: int = 2000
    inner_preconditioner: str = "amg"
    inner_A_tol: float = 1e-2
    inner_S_tol: float = 1e-6
    inner_maxiter: int = 1000
    pressure_scaling: bool = True


@dataclass
class SolverReport:
    outer_iterations: int = 0
    inner_A_iterations: int = 0
    inner_S_iterations: int = 0
    residual: float = 0.0
    converged: bool = True

    def __add__(self, other):
        return SolverReport(self.outer_iterations + other.outer_iterations,
                            self.inner_A_iterations + other.inner_A_iterations,
                            self.inner_S_iterations + other.inner_S_iterations,
                            max(self.residual, other.residual),
                            self.converged and other.converged)

    def as_row(self) -> dict:
        return {"outer_its": self.outer_iterations, "innerA_its": self.inner_A_iterations,
                "innerS_its": self.inner_S_iterations, "residual": self.residual}


# ----------------------------------------------------------------------
class StokesDiscretization:
    """Taylor-Hood (Q2^2 x Q1) or Q2^2 x P-1 spaces plus velocity boundary conditions.

    ``boundary`` maps each side to ``'no_slip'``, ``'free_slip'``, ``'open'``
    or a callable ``f(x, y) -> (ux, uy)`` prescribing the velocity.
    Unlisted sides are no-slip.
    """

    def __init__(self, mesh, pressure_element="Q1", boundary=None, quadrature_degree=5):
        self.mesh = mesh
        self.velocity = FunctionSpace(mesh, "Q2", 2)
        self.pressure = FunctionSpace(mesh, pressure_element, 1)
        self.boundary = {s: "no_slip" for s in SIDES}
        if boundary:
            unknown = set(boundary) - set(SIDES)
            if unknown:
                raise ValueError(f"unknown boundary sides {sorted(unknown)}")
            self.boundary.update(boundary)
        self.qd = CellQuadrature(mesh, quadrature_degree)
        self.update_boundary_values()
        self.p_constraints = AffineConstraints(self.pressure)
        self.pressure_mass = mass_vector(self.pressure, quadrature_degree)

    def update_boundary_values(self, time=0.0):
        self.u_constraints = AffineConstraints(self.velocity, self._velocity_dirichlet(time))

    @property
    def closed(self) -> bool:
        """Normal velocity prescribed on every side."""
        return all(self.boundary[s] != "open" for s in SIDES)

    def _velocity_dirichlet(self, time):
        V = self.velocity
        nn = V.n_nodes
        out = {}
        # free slip first so that prescribed/no-slip values win at shared corners
        for side in SIDES:
            if self.boundary[side] == "free_slip":
                comp = 0 if side in ("left", "right") else 1
                for n in V.boundary_nodes(side):
                    out[int(n + comp * nn)] = 0.0
        for side in SIDES:
            spec = self.boundary[side]
            if spec in ("free_slip", "open"):
                continue
            nodes = V.boundary_nodes(side)
            if spec == "no_slip":
                vals = np.zeros((2, len(nodes)))
            elif callable(spec):
                pts = V.node_points[nodes]
                try:
                    res = spec(pts[:, 0], pts[:, 1], time)
                except TypeError:
                    res = spec(pts[:, 0], pts[:, 1])
                vals = np.array([np.broadcast_to(np.asarray(r, dtype=float), (len(nodes),))
                                 for r in res])
            else:
                raise ValueError(f"unknown boundary condition {spec!r}")
            for comp in range(2):
                for n, v in zip(nodes, vals[comp]):
                    out[int(n + comp * nn)] = float(v)
        return out

    @property
    def n_velocity(self):
        return self.velocity.n_dofs

    @property
    def n_pressure(self):
        return self.pressure.n_dofs


# ----------------------------------------------------------------------
def compressibility_coefficient(outputs, formulation: FormulationConfig, gravity_q,
                                temperature_gradient=None, density_star=None):
    """``kappa`` at quadrature points, shape ``(n_cells, nq, 2)``; ``None`` if incompressible."""
    if formulation.mass_strategy == "incompressible":
        return None
    if (formulation.reference_profile == "adiabatic" and formulation.approximation in ("TALA", "ALA")
            and outputs.reference_density_gradient is not None):
        return outputs.reference_density_gradient / outputs.reference_density[..., None]
    kappa = outputs.compressibility[..., None] * gravity_q
    if temperature_gradient is not None:
        rho = outputs.density if density_star is None else density_star
        kappa = kappa + (outputs.thermal_density_derivative / rho)[..., None] * temperature_gradient
    return kappa


def _viscous_local(G, weta, compressible):
    """Local viscous blocks, ``(nc, 2*nl, 2*nl)`` in component-blocked order."""
    nc, _, nl, _ = G.shape
    M = np.einsum("cq,cqai,cqbj->caibj", weta, G, G, optimize=True)
    lap = M[:, :, 0, :, 0] + M[:, :, 1, :, 1]
    K = np.empty((nc, 2, nl, 2, nl))
    for c in range(2):
        for d in range(2):
            blk = M[:, :, d, :, c].copy()
            if c == d:
                blk += lap
            if compressible:
                blk -= (2.0 / 3.0) * M[:, :, c, :, d]
            K[:, c, :, d, :] = blk
    return K.reshape(nc, 2 * nl, 2 * nl)


@dataclass(eq=False)
class StokesSystem:
    """Raw-numbered blocks ``A``, ``B`` (divergence rows), ``C`` and right-hand sides."""

    disc: StokesDiscretization
    formulation: FormulationConfig
    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix | None
    f_u: np.ndarray
    f_p: np.ndarray
    viscosity: np.ndarray
    kappa: np.ndarray | None = None
    coupling_integrand: np.ndarray | None = None  # kappa . u* at quadrature points
    delta: float = 0.0
    _reduced: dict = field(default_factory=dict, repr=False)

    @property
    def symmetric(self) -> bool:
        return self.C is None

    # ------------------------------------------------------------------
    def mass_row_rhs(self) -> np.ndarray:
        """Raw mass-row right-hand side including the Dirichlet-velocity lift ``-(B + C) g``."""
        g = self.disc.u_constraints.g
        D = self.B if self.C is None else self.B + self.C
        return self.f_p - D @ g

    def pressure_scale(self, enabled=True) -> float:
        if not enabled:
            return 1.0
        (x0, x1), (y0, y1) = self.disc.mesh.extents
        return float(np.median(self.viscosity)) / max(x1 - x0, y1 - y0)

    def reduced(self, scaling=True):
        """Constrained, pressure-scaled operator ``K``, rhs and bookkeeping."""
        key = bool(scaling)
        if key in self._reduced:
            return self._reduced[key]
        cu, cp = self.disc.u_constraints, self.disc.p_constraints
        s = self.pressure_scale(scaling)
        Pu, Pp = cu.P, cp.P
        A_r = (Pu.T @ self.A @ Pu).tocsr()
        Bt_r = (Pu.T @ self.B.T @ Pp).tocsr() * s
        D = self.B if self.C is None else self.B + self.C
        D_r = (Pp.T @ D @ Pu).tocsr() * s
        K = sp.bmat([[A_r, Bt_r], [D_r, None]], format="csr")
        rhs_u = Pu.T @ (self.f_u - self.A @ cu.g)
        rhs_p = Pp.T @ self.mass_row_rhs() * s
        out = dict(K=K, A=A_r, Bt=Bt_r, D=D_r, rhs=np.concatenate([rhs_u, rhs_p]), scale=s,
                   nu=A_r.shape[0], np=D_r.shape[0])
        self._reduced[key] = out
        return out

    def expand(self, x, scaling=True):
        """Raw ``(u, p)`` from a reduced solution vector."""
        red = self.reduced(scaling)
        nu = red["nu"]
        u = self.disc.u_constraints.distribute(x[:nu])
        p = self.disc.p_constraints.distribute(x[nu:]) * red["scale"]
        return u, p

    def compress(self, u, p, scaling=True):
        red = self.reduced(scaling)
        return np.concatenate([self.disc.u_constraints.restrict(u),
                               self.disc.p_constraints.restrict(p) / red["scale"]])

    def residual_norm(self, u, p, scaling=True) -> float:
        """Relative residual ``||K x - rhs|| / ||rhs||`` of raw ``(u, p)``."""
        red = self.reduced(scaling)
        x = self.compress(u, p, scaling)
        r = red["K"] @ x - red["rhs"]
        nb = np.linalg.norm(red["rhs"])
        return float(np.linalg.norm(r) / (nb if nb > 0 else 1.0))


def assemble_stokes(disc: StokesDiscretization, outputs, formulation: FormulationConfig,
                    gravity_q, u_star=None, temperature_gradient=None, density_star=None):
    """Assemble the Stokes blocks for the given averaged material outputs.

    Parameters
    ----------
    gravity_q : (n_cells, nq, 2) gravity vectors at quadrature points
    u_star : raw velocity vector used by the explicit strategy
    temperature_gradient : (n_cells, nq, 2) ``grad T*`` (``'previous'`` reference profile)
    """
    qd = disc.qd
    V, Q = disc.velocity, disc.pressure
    nc = qd.n_cells
    JxW = qd.JxW
    eta = outputs.viscosity
    G = qd.shape_grads(V.element)  # (nc, nq, nl, 2)
    phi = qd.shape_values(V.element)  # (nq, nl)
    psi = qd.shape_values(Q.element)  # (nq, npl)
    nl = V.element.n_local
    nu, np_ = V.n_dofs, Q.n_dofs

    A_loc = _viscous_local(G, JxW * eta, formulation.compressible)
    A = scatter_matrix(V.cell_dofs, V.cell_dofs, A_loc, (nu, nu))

    # divergence rows: -(q, div v)
    B_loc = -np.einsum("cq,qk,cqad->ckda", JxW, psi, G, optimize=True).reshape(nc, psi.shape[1], 2 * nl)
    B = scatter_matrix(Q.cell_dofs, V.cell_dofs, B_loc, (np_, nu))

    rho_g = outputs.density[..., None] * gravity_q
    fu_loc = np.einsum("cq,qa,cqd->cda", JxW, phi, rho_g).reshape(nc, 2 * nl)
    f_u = scatter_vector(V.cell_dofs, fu_loc, nu)

    kappa = compressibility_coefficient(outputs, formulation, gravity_q, temperature_gradient,
                                        density_star)
    C = None
    f_p = np.zeros(np_)
    integrand = None
    if formulation.mass_strategy == "implicit":
        C_loc = -np.einsum("cq,qk,cqd,qa->ckda", JxW, psi, kappa, phi, optimize=True).reshape(
            nc, psi.shape[1], 2 * nl)
        C = scatter_matrix(Q.cell_dofs, V.cell_dofs, C_loc, (np_, nu))
    elif formulation.mass_strategy == "explicit":
        if u_star is None:
            raise ValueError("the explicit strategy needs a velocity u*")
        uq = field_at_quadrature(V, u_star, qd, gradients=False)
        integrand = np.einsum("cqd,cqd->cq", kappa, uq)
        f_p = scatter_vector(Q.cell_dofs, np.einsum("cq,qk,cq->ck", JxW, psi, integrand), np_)
    return StokesSystem(disc, formulation, A, B, C, f_u, f_p, eta, kappa, integrand)


def compute_delta_correction(system: StokesSystem, apply=True):
    """Compatibility constant ``delta`` for the explicit strategy in closed domains.

    ``delta = -(1/|Omega|) (int_dOmega u.n + int_Omega kappa . u*)``; the boundary
    flux is evaluated as the integral of the divergence of the discrete
    boundary lift, which is what the discrete mass rows see.  Returns 0 (and
    leaves the system untouched) unless the strategy is explicit and the
    normal velocity is prescribed on every side.
    """
    disc = system.disc
    if system.formulation.mass_strategy != "explicit" or not disc.closed:
        return 0.0
    ones = disc.pressure.constant_vector()
    area = disc.mesh.area
    boundary_flux = -float(ones @ (system.B @ disc.u_constraints.g))
    coupling = float(np.sum(system.coupling_integrand * disc.qd.JxW))
    delta = -(boundary_flux + coupling) / area
    if apply:
        system.f_p = system.f_p + delta * disc.pressure_mass_full()
        system.delta = delta
        system._reduced.clear()
    return delta


def _pressure_mass_full(disc):
    """``int psi_k`` for every raw pressure dof (all basis functions, not just constants)."""
    qd = disc.qd
    psi = qd.shape_values(disc.pressure.element)
    local = np.einsum("cq,qk->ck", qd.JxW, psi)
    return scatter_vector(disc.pressure.cell_dofs, local, disc.pressure.n_dofs)


StokesDiscretization.pressure_mass_full = _pressure_mass_full


# ----------------------------------------------------------------------
def normalize_pressure(p, disc_or_space, mode="volume"):
    """Shift ``p`` so its domain average (``'volume'``) or top-surface average (``'surface'``) is zero."""
    space = disc_or_space.pressure if isinstance(disc_or_space, StokesDiscretization) else disc_or_space
    p = np.asarray(p, dtype=float)
    ones = space.constant_vector()
    if mode == "volume":
        m = mass_vector(space)
        mean = (m @ p) / (m @ ones)
    elif mode == "surface":
        mean = _surface_mean(p, space)
    else:
        raise ValueError(f"unknown normalization {mode!r}")
    return p - mean * ones


def _surface_mean(p, space):
    from .fem import evaluate_at_points, gauss_1d
    mesh = space.mesh
    (x0, x1), (y0, y1) = mesh.extents
    origin, h = mesh.cell_geometry()
    top = np.flatnonzero(np.isclose(origin[:, 1] + h[:, 1], y1))
    t, w = gauss_1d(3)
    xs = (origin[top, 0][:, None] + h[top, 0][:, None] * t[None, :]).ravel()
    ws = (h[top, 0][:, None] * w[None, :]).ravel()
    vals = evaluate_at_points(p, space, np.column_stack([xs, np.full_like(xs, y1)]))[0][:, 0]
    return float(ws @ vals / ws.sum())


# ----------------------------------------------------------------------
AMG_SEED = 0


class _InnerVelocitySolver:
    def __init__(self, A, kind, tol, maxiter, near_null=None):
        self.A = A
        self.tol = tol
        self.maxiter = maxiter
        self.iterations = 0
        self.kind = kind
        self.M = None
        if kind == "amg":
            import pyamg
            # Energy-minimizing prolongation smoothing: the default Jacobi smoothing scales
            # by a randomly started spectral-radius estimate, which is unreliable under
            # 1e6 viscosity jumps (outer counts then vary ~2x with the random start).
            # The global RNG is still fixed so that any remaining draws are reproducible.
            state = np.random.get_state()
            np.random.seed(AMG_SEED)
            try:
                ml = pyamg.smoothed_aggregation_solver(A, B=near_null, symmetry="symmetric",
                                                       smooth="energy", max_coarse=500)
            finally:
                np.random.set_state(state)
            self.M = ml.aspreconditioner(cycle="V")
        elif kind == "ilu":
            ilu = spla.spilu(A.tocsc(), drop_tol=1e-4, fill_factor=10)
            self.M = ilu.solve
        elif kind == "ssor":
            from pyamg.relaxation.relaxation import gauss_seidel

            def sgs(r):
                x = np.zeros_like(r)
                gauss_seidel(A, x, r, iterations=1, sweep="symmetric")
                return x
            self.M = sgs
        elif kind == "direct":
            self.lu = spla.splu(A.tocsc())
        else:
            raise ValueError(f"unknown inner preconditioner {kind!r}")

    def __call__(self, r):
        if self.kind == "direct":
            self.iterations += 1
            return self.lu.solve(r)
        res = pcg(self.A, r, self.M, rtol=self.tol, maxiter=self.maxiter)
        self.iterations += res.iterations
        return res.x


class _InnerSchurSolver:
    def __init__(self, S, tol, maxiter):
        self.S = S
        self.tol = tol
        self.maxiter = maxiter
        self.iterations = 0
        d = S.diagonal()
        self.dinv = 1.0 / d
        self.block_diagonal = False

    def __call__(self, r):
        res = pcg(self.S, r, lambda v: self.dinv * v, rtol=self.tol, maxiter=self.maxiter)
        self.iterations += res.iterations
        return res.x


def _near_nullspace(disc):
    """Rigid-body modes on the free velocity dofs (for aggregation AMG)."""
    V = disc.velocity
    nn = V.n_nodes
    x, y = V.node_points[:, 0], V.node_points[:, 1]
    modes = np.zeros((V.n_dofs, 3))
    modes[:nn, 0] = 1.0
    modes[nn:, 1] = 1.0
    modes[:nn, 2] = -(y - y.mean())
    modes[nn:, 2] = x - x.mean()
    return modes[disc.u_constraints.free]


def schur_mass_matrix(system: StokesSystem, scale=1.0):
    """``int (1/eta) p q`` on the free pressure dofs, times ``scale**2``."""
    disc = system.disc
    qd = disc.qd
    Q = disc.pressure
    psi = qd.shape_values(Q.element)
    w = qd.JxW / system.viscosity
    local = np.einsum("cq,qa,qb->cab", w, psi, psi)
    M = scatter_matrix(Q.cell_dofs, Q.cell_dofs, local, (Q.n_dofs,) * 2)
    P = disc.p_constraints.P
    return (P.T @ M @ P).tocsr() * scale ** 2


def solve_stokes(system: StokesSystem, config: SolverConfig | None = None, x0=None, cache=None):
    """Solve the saddle-point system; returns raw ``(u, p, SolverReport)``.

    ``cache`` (a dict owned by the caller) lets the direct method reuse its
    factorization while the reduced operator is unchanged.

    The pressure is returned with zero volume mean when the domain is closed.
    Raises :class:`SolverError` (with the report attached) if GMRES does not
    converge.
    """
    config = config or SolverConfig()
    disc = system.disc
    red = system.reduced(config.pressure_scaling)
    K, rhs, nu = red["K"], red["rhs"], red["nu"]
    closed = disc.closed
    ones_p = disc.p_constraints.restrict(disc.pressure.constant_vector())
    m_p = disc.p_constraints.P.T @ disc.pressure_mass_full()

    if config.method == "direct":
        Kd = K
        pin = None
        if closed:
            pin = nu + int(np.argmax(ones_p))
            Kd = K.tolil()
            Kd[pin, :] = 0.0
            Kd[:, pin] = 0.0
            Kd[pin, pin] = 1.0
            Kd = Kd.tocsc()
            rhs_d = rhs.copy()
            rhs_d[pin] = 0.0
        else:
            rhs_d = rhs
        cached = cache.get("direct") if cache is not None else None
        if (cached is not None and cached[0].shape == K.shape and cached[0].nnz == K.nnz
                and (cached[0] != K).nnz == 0):
            lu = cached[1]
        else:
            lu = spla.splu(Kd.tocsc())
            if cache is not None:
                cache["direct"] = (K, lu)
        x = lu.solve(rhs_d)
        nb = np.linalg.norm(rhs)
        res = np.linalg.norm(K @ x - rhs) / (nb if nb > 0 else 1.0)
        report = SolverReport(1, 0, 0, float(res), True)
    elif config.method == "gmres":
        A_r = red["A"]
        Bt = red["Bt"]
        inner_A = _InnerVelocitySolver(A_r, config.inner_preconditioner, config.inner_A_tol,
                                       config.inner_maxiter,
                                       _near_nullspace(disc) if config.inner_preconditioner == "amg" else None)
        S = schur_mass_matrix(system, red["scale"])
        inner_S = _InnerSchurSolver(S, config.inner_S_tol, config.inner_maxiter)

        def project(yp):
            if closed:
                yp = yp - (m_p @ yp) / (m_p @ ones_p) * ones_p
            return yp

        def precondition(r):
            yp = project(-inner_S(r[nu:]))
            yu = inner_A(r[:nu] - Bt @ yp)
            return np.concatenate([yu, yp])

        x_init = None if x0 is None else system.compress(*x0, scaling=config.pressure_scaling)
        result = fgmres(K, rhs, precondition, rtol=config.rtol, restart=config.restart,
                        maxiter=config.maxiter, x0=x_init)
        x = result.x
        report = SolverReport(result.iterations, inner_A.iterations, inner_S.iterations,
                              float(result.residual), result.converged)
        if not result.converged:
            raise SolverError(f"Stokes GMRES did not converge: residual {result.residual:.3e} "
                              f"after {result.iterations} iterations", report)
    else:
        raise ValueError(f"unknown Stokes method {config.method!r}")
    u, p = system.expand(x, config.pressure_scaling)
    if closed:
        p = normalize_pressure(p, disc)
    return u, p, report


# ----------------------------------------------------------------------
@dataclass
class PicardResult:
    u: np.ndarray
    p: np.ndarray
    reports: list
    residuals: list
    iterations: int
    system: StokesSystem | None = None  # assembled with the converged velocity
    updates: list = field(default_factory=list)

    @property
    def total(self) -> SolverReport:
        out = SolverReport()
        for r in self.reports:
            out = out + r
        return out


def picard_compressible(assemble, solve, u0, tol=1e-6, max_iterations=50):
    """Fixed-point iteration on the explicit compressibility term.

    ``assemble(u_star) -> StokesSystem`` and ``solve(system) -> (u, p, report)``.
    Iteration stops when the relative velocity update ``|u_k - u_{k-1}| / |u_k|``
    falls below ``tol``.  The relative residual of each iterate in the system
    re-assembled with it is recorded as well, but it is not used for
    stopping: with prescribed inflow the right-hand side is dominated by the
    boundary lift, so a small residual does not imply a small velocity error.
    """
    u_star = np.asarray(u0, dtype=float)
    reports, residuals, updates = [], [], []
    system = assemble(u_star)
    for k in range(1, max_iterations + 1):
        u, p, rep = solve(system)
        reports.append(rep)
        nu = np.linalg.norm(u)
        updates.append(float(np.linalg.norm(u - u_star) / (nu if nu > 0 else 1.0)))
        system = assemble(u)
        residuals.append(system.residual_norm(u, p))
        if updates[-1] < tol:
            return PicardResult(u, p, reports, residuals, k, system, updates)
        u_star = u
    raise SolverError(f"Picard iteration did not converge in {max_iterations} iterations "
                      f"(velocity updates {updates})", reports)
