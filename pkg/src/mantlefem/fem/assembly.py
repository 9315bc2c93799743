"""Quadrature data, sparse scatter helpers and field evaluation.

All cells are axis-aligned rectangles, so the reference-to-physical map is
``x = origin + h * xi`` with a diagonal Jacobian; physical gradients are
reference gradients divided by ``h`` componentwise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .elements import quadrature_rule

#: assembly default: exact for 2 * (velocity degree) + 1 = 5 -> 3x3 Gauss
DEFAULT_QUADRATURE_DEGREE = 5


@dataclass(eq=False)
class CellQuadrature:
    """Quadrature points and weights on every active cell.

    Attributes
    ----------
    ref_points, ref_weights : reference rule on [0,1]^2
    origin, h : (n_cells, 2) lower-left corner and side lengths
    points : (n_cells, nq, 2) physical points
    JxW : (n_cells, nq) physical weights
    """

    mesh: object
    degree: int = DEFAULT_QUADRATURE_DEGREE

    def __post_init__(self):
        self.ref_points, self.ref_weights = quadrature_rule(self.degree)
        self.origin, self.h = self.mesh.cell_geometry()
        self.points = self.origin[:, None, :] + self.h[:, None, :] * self.ref_points[None, :, :]
        self.JxW = np.outer(self.h[:, 0] * self.h[:, 1], self.ref_weights)

    @property
    def n_cells(self):
        return len(self.origin)

    @property
    def n_points(self):
        return len(self.ref_weights)

    def shape_values(self, element):
        """Reference values ``(nq, n_local)`` (the map is affine, so they are cell independent)."""
        return element.values(self.ref_points)

    def shape_grads(self, element):
        """Physical gradients ``(n_cells, nq, n_local, 2)``."""
        g = element.grads(self.ref_points)
        return g[None, :, :, :] / self.h[:, None, None, :]


# ----------------------------------------------------------------------
def scatter_matrix(row_dofs, col_dofs, local, shape) -> sp.csr_matrix:
    """Sum per-cell blocks ``local[c, i, j]`` into a CSR matrix (serial reduction)."""
    nc, nr = row_dofs.shape
    ncol = col_dofs.shape[1]
    idx_t = np.int32 if max(shape) < 2**31 - 1 else np.int64
    r = np.broadcast_to(row_dofs[:, :, None], (nc, nr, ncol)).astype(idx_t).ravel()
    c = np.broadcast_to(col_dofs[:, None, :], (nc, nr, ncol)).astype(idx_t).ravel()
    M = sp.coo_matrix((np.asarray(local, dtype=float).ravel(), (r, c)), shape=shape).tocsr()
    M.sum_duplicates()
    return M


def scatter_vector(dofs, local, n) -> np.ndarray:
    return np.bincount(np.asarray(dofs).ravel(), weights=np.asarray(local, dtype=float).ravel(),
                       minlength=n)


def symmetric_within(K, rtol=1e-12) -> bool:
    """Check ``max|K - K^T| < rtol * max|K|``."""
    scale = abs(K).max()
    if scale == 0:
        return True
    D = (K - K.T).tocoo()
    return D.nnz == 0 or np.abs(D.data).max() < rtol * scale


# ----------------------------------------------------------------------
def local_coefficients(space, vec) -> np.ndarray:
    """Per-cell coefficients ``(n_cells, n_components, n_local_scalar)``."""
    vec = np.asarray(vec, dtype=float)
    nl = space.element.n_local
    return vec[space.cell_dofs].reshape(-1, space.n_components, nl)


def field_at_quadrature(space, vec, qd: CellQuadrature, gradients=True):
    """Values ``(nc, nq, ncomp)`` and gradients ``(nc, nq, ncomp, 2)`` of a raw vector."""
    coef = local_coefficients(space, vec)
    phi = qd.shape_values(space.element)
    val = np.einsum("qa,cka->cqk", phi, coef)
    if not gradients:
        return val
    gref = space.element.grads(qd.ref_points)
    grad = np.einsum("qad,cka->cqkd", gref, coef) / qd.h[:, None, None, :]
    return val, grad


def interpolate(func, space, mesh=None):
    """Nodal interpolation of ``func(x, y)`` (returns ncomp arrays for vector spaces).

    The discontinuous affine space uses the cellwise L2 projection, which is
    exact for affine functions.
    """
    def as_components(values, n):
        if space.n_components == 1:
            return [np.broadcast_to(np.asarray(values, dtype=float), (n,))]
        return [np.broadcast_to(np.asarray(v, dtype=float), (n,)) for v in values]

    if space.element.continuous:
        pts = space.node_points
        comps = as_components(func(pts[:, 0], pts[:, 1]), len(pts))
        return np.concatenate(comps).astype(float)
    qd = CellQuadrature(space.mesh, 4)
    phi = qd.shape_values(space.element)
    M = np.einsum("q,qa,qb->ab", qd.ref_weights, phi, phi)
    Minv = np.linalg.inv(M)
    x = qd.points.reshape(-1, 2)
    out = []
    for comp in as_components(func(x[:, 0], x[:, 1]), len(x)):
        f = comp.reshape(qd.n_cells, qd.n_points)
        rhs = np.einsum("q,qa,cq->ca", qd.ref_weights, phi, f)
        out.append((rhs @ Minv.T).ravel())
    return np.concatenate(out)


def evaluate_at_points(vec, space, points):
    """Values ``(npts, ncomp)`` and gradients ``(npts, ncomp, 2)`` at arbitrary points.

    Raises ``ValueError`` for points outside the domain.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mesh = space.mesh
    cells, xi = mesh.locate(points)
    _, h = mesh.cell_geometry()
    el = space.element
    phi = el.values(xi)  # (npts, nl)
    gref = el.grads(xi)  # (npts, nl, 2)
    coef = local_coefficients(space, vec)[cells]  # (npts, ncomp, nl)
    val = np.einsum("pa,pka->pk", phi, coef)
    grad = np.einsum("pad,pka->pkd", gref, coef) / h[cells][:, None, :]
    return val, grad


def integrate(func, mesh, degree=DEFAULT_QUADRATURE_DEGREE) -> float:
    """``int_Omega func(x, y)`` with the assembly quadrature."""
    qd = CellQuadrature(mesh, degree)
    x = qd.points
    return float(np.sum(np.asarray(func(x[..., 0], x[..., 1]), dtype=float) * qd.JxW))


def integrate_field(space, vec, degree=DEFAULT_QUADRATURE_DEGREE, transform=None) -> float:
    """Integral of a scalar field (or ``transform(values)``) over the mesh."""
    qd = CellQuadrature(space.mesh, degree)
    val = field_at_quadrature(space, vec, qd, gradients=False)[..., 0]
    if transform is not None:
        val = transform(val)
    return float(np.sum(val * qd.JxW))


def mass_vector(space, degree=DEFAULT_QUADRATURE_DEGREE) -> np.ndarray:
    """``m_i = int phi_i`` for a scalar space (raw numbering)."""
    qd = CellQuadrature(space.mesh, degree)
    phi = qd.shape_values(space.element)
    local = np.einsum("cq,qa->ca", qd.JxW, phi)
    return scatter_vector(space.cell_nodes, local, space.n_nodes)


def mass_matrix(space, coefficient=None, degree=DEFAULT_QUADRATURE_DEGREE, qd=None):
    """Scalar mass matrix ``int c phi_i phi_j`` (``coefficient`` per quadrature point)."""
    qd = CellQuadrature(space.mesh, degree) if qd is None else qd
    phi = qd.shape_values(space.element)
    w = qd.JxW if coefficient is None else qd.JxW * coefficient
    local = np.einsum("cq,qa,qb->cab", w, phi, phi)
    return scatter_matrix(space.cell_nodes, space.cell_nodes, local, (space.n_nodes,) * 2)


def stiffness_matrix(space, coefficient=None, degree=DEFAULT_QUADRATURE_DEGREE, qd=None):
    """Scalar Laplace matrix ``int c grad phi_i . grad phi_j``."""
    qd = CellQuadrature(space.mesh, degree) if qd is None else qd
    G = qd.shape_grads(space.element)
    w = qd.JxW if coefficient is None else qd.JxW * coefficient
    local = np.einsum("cq,cqad,cqbd->cab", w, G, G)
    return scatter_matrix(space.cell_nodes, space.cell_nodes, local, (space.n_nodes,) * 2)
