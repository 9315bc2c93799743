"""Degree-of-freedom numbering and affine constraints.

Every node of a continuous Lagrange space gets one raw dof per component;
nodes are identified through an integer lattice fine enough to hold the
nodes of the finest cells.  Hanging nodes (nodes of a fine cell sitting on
the edge of a coarser neighbour) are constrained to the coarse edge nodes
with the 1D Lagrange weights of that edge.  Dirichlet values use the same
affine-constraint machinery.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .elements import DiscontinuousP1, LagrangeQ, _lagrange_1d, make_element


@dataclass(eq=False)
class FunctionSpace:
    """A finite element space on a mesh together with its dof layout.

    Attributes
    ----------
    cell_nodes : (n_cells, n_local) node indices per active cell
    cell_dofs : (n_cells, n_components * n_local) raw dof indices, component-blocked
    node_points : (n_nodes, 2) node coordinates (Lagrange spaces only)
    hanging_nodes : nodes constrained by a coarser neighbour's edge
    hanging_matrix : (n_nodes, n_nodes) map expressing every node through unconstrained ones
    """

    mesh: object
    element: object
    n_components: int = 1

    def __post_init__(self):
        if isinstance(self.element, str):
            self.element = make_element(self.element)
        if self.element.continuous:
            self._distribute_lagrange()
        else:
            self._distribute_discontinuous()

    # ------------------------------------------------------------------
    @property
    def n_dofs(self) -> int:
        return self.n_nodes * self.n_components

    @property
    def n_local(self) -> int:
        return self.element.n_local * self.n_components

    @property
    def degree(self) -> int:
        return self.element.degree

    @property
    def hanging_dofs(self) -> np.ndarray:
        return np.concatenate([self.hanging_nodes + c * self.n_nodes
                               for c in range(self.n_components)])

    def component_dofs(self, comp: int) -> np.ndarray:
        return np.arange(self.n_nodes) + comp * self.n_nodes

    # ------------------------------------------------------------------
    def _distribute_discontinuous(self):
        n = self.mesh.n_active
        nl = self.element.n_local
        self.n_nodes = n * nl
        self.cell_nodes = np.arange(n * nl, dtype=np.int64).reshape(n, nl)
        self.node_points = None
        self._finish_cell_dofs()
        self.hanging_nodes = np.zeros(0, np.int64)
        self.hanging_matrix = sp.identity(self.n_dofs, format="csr")

    def _distribute_lagrange(self):
        mesh, el = self.mesh, self.element
        p = el.degree
        L = mesh.max_level
        nx, ny = mesh.subdivisions
        NY = (ny << L) * p + 1
        cells = mesh.active_cells
        lvl = mesh.level[cells]
        stride = (1 << (L - lvl))  # lattice units per node spacing
        base = mesh.ij[cells] * (stride * p)[:, None]
        lat = base[:, None, :] + el.node_lattice[None, :, :] * stride[:, None, None]
        keys = lat[..., 0] * NY + lat[..., 1]
        uniq, inv = np.unique(keys.ravel(), return_inverse=True)
        self.cell_nodes = inv.reshape(keys.shape).astype(np.int64)
        self.n_nodes = len(uniq)
        (x0, _), (y0, _) = mesh.extents
        hx0, hy0 = mesh.root_size
        unit = np.array([hx0 / (1 << L) / p, hy0 / (1 << L) / p])
        self.node_points = np.column_stack([x0 + (uniq // NY) * unit[0], y0 + (uniq % NY) * unit[1]])
        self._finish_cell_dofs()

        # hanging nodes: lattice points strictly inside a cell edge at odd
        # multiples of half the node spacing that exist as nodes
        t_fine = (2 * np.arange(p) + 1) / (2.0 * p)
        weights = _lagrange_1d(el.nodes_1d, t_fine)[0]  # (p, p+1)
        h_rows, h_masters, h_w = [], [], []
        for face in range(4):
            edge_nodes = el.edge_local_nodes(face)
            start = lat[:, edge_nodes[0], :]
            direction = np.array([0, 1]) if face in (0, 1) else np.array([1, 0])
            for m in range(p):
                offset = (2 * m + 1) * stride  # in half-spacing units -> need even lattice
                # half node spacing = stride / 2 lattice units; only exists if stride >= 2
                ok = stride >= 2
                cand = start + (offset // 2)[:, None] * direction[None, :]
                ckeys = cand[:, 0] * NY + cand[:, 1]
                pos = np.searchsorted(uniq, ckeys)
                pos = np.minimum(pos, len(uniq) - 1)
                found = ok & (uniq[pos] == ckeys)
                if not found.any():
                    continue
                h_rows.append(pos[found])
                h_masters.append(self.cell_nodes[found][:, edge_nodes])
                h_w.append(np.broadcast_to(weights[m], (found.sum(), p + 1)))
        if h_rows:
            rows = np.concatenate(h_rows)
            masters = np.concatenate(h_masters)
            w = np.concatenate(h_w)
            rows, first = np.unique(rows, return_index=True)
            masters, w = masters[first], w[first]
        else:
            rows = np.zeros(0, np.int64)
            masters = np.zeros((0, p + 1), np.int64)
            w = np.zeros((0, p + 1))
        self.hanging_nodes = rows
        self.hanging_weights = (masters, w)
        self.hanging_matrix = self._resolve_chains(rows, masters, w)

    def _finish_cell_dofs(self):
        nc = self.n_components
        self.cell_dofs = np.concatenate([self.cell_nodes + c * self.n_nodes for c in range(nc)],
                                        axis=1).astype(np.int64)

    def _resolve_chains(self, rows, masters, w):
        """Node-level matrix ``T`` with ``v = T v`` expressing every node via unconstrained nodes."""
        n = self.n_nodes
        keep = np.setdiff1d(np.arange(n), rows)
        r = np.concatenate([keep, np.repeat(rows, masters.shape[1])])
        c = np.concatenate([keep, masters.ravel()])
        d = np.concatenate([np.ones(len(keep)), w.ravel()])
        T = sp.csr_matrix((d, (r, c)), shape=(n, n))
        for _ in range(64):
            T2 = (T @ T).tocsr()
            diff = T2 - T
            T = T2
            if diff.nnz == 0 or abs(diff).max() < 1e-14:
                break
        T.data[np.abs(T.data) < 1e-15] = 0.0
        T.eliminate_zeros()
        return T

    # ------------------------------------------------------------------
    def boundary_nodes(self, side: str, tol=1e-10) -> np.ndarray:
        """Nodes on one side of the rectangle: 'left', 'right', 'bottom', 'top'."""
        if self.node_points is None:
            raise ValueError("discontinuous spaces have no boundary nodes")
        (x0, x1), (y0, y1) = self.mesh.extents
        scale = tol * max(x1 - x0, y1 - y0)
        x, y = self.node_points[:, 0], self.node_points[:, 1]
        sel = {"left": np.abs(x - x0) < scale, "right": np.abs(x - x1) < scale,
               "bottom": np.abs(y - y0) < scale, "top": np.abs(y - y1) < scale}[side]
        return np.flatnonzero(sel)

    def constant_vector(self) -> np.ndarray:
        """Raw coefficient vector of the constant function 1 (scalar spaces)."""
        v = np.zeros(self.n_dofs)
        if self.element.continuous:
            v[: self.n_nodes] = 1.0
        else:
            v[self.cell_nodes[:, 0]] = 1.0
        return v


def distribute_dofs(mesh, space, n_components=1) -> FunctionSpace:
    return FunctionSpace(mesh, space, n_components)


class AffineConstraints:
    """Constraints ``x_raw = P x_free + g`` combining hanging nodes and Dirichlet values."""

    def __init__(self, space: FunctionSpace, dirichlet: dict | None = None):
        self.space = space
        n = space.n_dofs
        # dof-level hanging matrix (block diagonal over components)
        T = sp.block_diag([space.hanging_matrix] * space.n_components, format="csr") \
            if space.element.continuous else sp.identity(n, format="csr")
        dir_dofs = np.zeros(0, np.int64)
        dir_vals = np.zeros(0)
        if dirichlet:
            dir_dofs = np.fromiter(dirichlet.keys(), dtype=np.int64, count=len(dirichlet))
            dir_vals = np.fromiter(dirichlet.values(), dtype=float, count=len(dirichlet))
            order = np.argsort(dir_dofs)
            dir_dofs, dir_vals = dir_dofs[order], dir_vals[order]
        diag = T.diagonal()
        rowlen = np.diff(T.indptr)
        hanging = np.flatnonzero(~((rowlen == 1) & (diag == 1.0)))
        constrained = np.union1d(hanging, dir_dofs)
        free = np.setdiff1d(np.arange(n), constrained)
        self.free = free
        self.dirichlet_dofs = dir_dofs
        self.hanging_dofs = np.setdiff1d(hanging, dir_dofs)
        self.constrained = constrained
        g = np.zeros(n)
        g[dir_dofs] = dir_vals
        # Dirichlet rows of T become zero rows (value carried by g)
        D = sp.diags(np.where(np.isin(np.arange(n), dir_dofs), 0.0, 1.0))
        Tm = (D @ T).tocsr()
        # columns: free dofs contribute to P, Dirichlet masters contribute to g
        g = g + Tm @ g
        g[dir_dofs] = dir_vals
        col_map = -np.ones(n, dtype=np.int64)
        col_map[free] = np.arange(len(free))
        Tc = Tm.tocoo()
        keep = col_map[Tc.col] >= 0
        self.P = sp.csr_matrix((Tc.data[keep], (Tc.row[keep], col_map[Tc.col[keep]])),
                               shape=(n, len(free)))
        self.g = g
        self.n_free = len(free)

    # ------------------------------------------------------------------
    def distribute(self, x_free) -> np.ndarray:
        return self.P @ x_free + self.g

    def restrict(self, x_raw) -> np.ndarray:
        return np.asarray(x_raw)[self.free]

    def apply(self, x_raw) -> np.ndarray:
        """Overwrite constrained entries from their masters; idempotent."""
        return self.distribute(self.restrict(x_raw))

    def condense_matrix(self, K, col=None):
        """``P_row^T K P_col``."""
        col = self if col is None else col
        return (self.P.T @ K @ col.P).tocsr()

    def condense_rhs(self, f, K=None, col=None):
        col = self if col is None else col
        r = np.asarray(f, dtype=float)
        if K is not None and np.any(col.g):
            r = r - K @ col.g
        return self.P.T @ r


def dirichlet_from_function(space: FunctionSpace, sides, func, component=0) -> dict:
    """Dirichlet map ``{dof: value}`` from ``func(x, y)`` on the given sides."""
    out = {}
    for side in sides:
        nodes = space.boundary_nodes(side)
        pts = space.node_points[nodes]
        vals = np.broadcast_to(np.asarray(func(pts[:, 0], pts[:, 1]), dtype=float), (len(nodes),))
        for n, v in zip(nodes + component * space.n_nodes, vals):
            out[int(n)] = float(v)
    return out


__all__ = ["FunctionSpace", "AffineConstraints", "distribute_dofs", "dirichlet_from_function",
           "LagrangeQ", "DiscontinuousP1"]
