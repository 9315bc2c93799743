"""Reference elements and quadrature on the unit square ``[0, 1]^2``.

The reference measure is 1, so quadrature weights sum to one and the
physical weight of a point is ``w * hx * hy``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


def quadrature_rule(degree: int):
    """Tensor Gauss rule exact for polynomials of total degree ``degree`` per axis.

    Returns ``(points, weights)`` with ``points`` of shape ``(n, 2)``.
    """
    if degree < 1:
        raise ValueError("quadrature degree must be >= 1")
    n = (degree + 2) // 2
    return _gauss(n)


@lru_cache(maxsize=None)
def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    X, Y = np.meshgrid(x, x, indexing="xy")
    W = np.outer(w, w)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts.setflags(write=False)
    W = W.ravel()
    W.setflags(write=False)
    return pts, W


def gauss_1d(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _lagrange_1d(nodes, t):
    """Values, first and second derivatives of 1D Lagrange polynomials at ``t``."""
    t = np.asarray(t, dtype=float)
    m = len(nodes)
    val = np.ones((len(t), m))
    d1 = np.zeros((len(t), m))
    d2 = np.zeros((len(t), m))
    for a in range(m):
        others = [b for b in range(m) if b != a]
        denom = np.prod([nodes[a] - nodes[b] for b in others])
        # product rule written out for degree <= 2 style generality
        terms = [t - nodes[b] for b in others]
        val[:, a] = np.prod(terms, axis=0) / denom if others else 1.0
        for p in range(len(others)):
            prod = np.ones_like(t)
            for q in range(len(others)):
                if q != p:
                    prod = prod * terms[q]
            d1[:, a] += prod / denom
            for q in range(len(others)):
                if q == p:
                    continue
                prod2 = np.ones_like(t)
                for r in range(len(others)):
                    if r not in (p, q):
                        prod2 = prod2 * terms[r]
                d2[:, a] += prod2 / denom
    return val, d1, d2


class LagrangeQ:
    """Continuous tensor-product Lagrange element of degree 1 or 2.

    Local nodes are ordered lexicographically with ``x`` running fastest.
    """

    continuous = True

    def __init__(self, degree: int):
        if degree not in (1, 2):
            raise ValueError("only Q1 and Q2 are provided")
        self.degree = degree
        self.nodes_1d = np.linspace(0.0, 1.0, degree + 1)
        self.n_local = (degree + 1) ** 2
        X, Y = np.meshgrid(self.nodes_1d, self.nodes_1d, indexing="xy")
        self.node_points = np.column_stack([X.ravel(), Y.ravel()])
        # lattice offsets of the nodes, in units of (cell size / degree)
        self.node_lattice = np.rint(self.node_points * degree).astype(np.int64)

    def __repr__(self):
        return f"Q{self.degree}"

    def _tabulate(self, pts):
        pts = np.atleast_2d(pts)
        vx, dx, ddx = _lagrange_1d(self.nodes_1d, pts[:, 0])
        vy, dy, ddy = _lagrange_1d(self.nodes_1d, pts[:, 1])
        # local index a = iy * (p+1) + ix
        val = np.einsum("qj,qi->qji", vy, vx).reshape(len(pts), -1)
        gx = np.einsum("qj,qi->qji", vy, dx).reshape(len(pts), -1)
        gy = np.einsum("qj,qi->qji", dy, vx).reshape(len(pts), -1)
        hxx = np.einsum("qj,qi->qji", vy, ddx).reshape(len(pts), -1)
        hyy = np.einsum("qj,qi->qji", ddy, vx).reshape(len(pts), -1)
        hxy = np.einsum("qj,qi->qji", dy, dx).reshape(len(pts), -1)
        return val, np.stack([gx, gy], axis=-1), np.stack([hxx, hyy, hxy], axis=-1)

    def values(self, pts):
        return self._tabulate(pts)[0]

    def grads(self, pts):
        """Reference gradients, shape ``(npts, n_local, 2)``."""
        return self._tabulate(pts)[1]

    def hessians(self, pts):
        """Reference second derivatives ``(xx, yy, xy)``, shape ``(npts, n_local, 3)``."""
        return self._tabulate(pts)[2]

    def edge_local_nodes(self, face: int):
        """Local node indices along a face, ordered by increasing coordinate."""
        p = self.degree
        idx = np.arange(self.n_local).reshape(p + 1, p + 1)  # [iy, ix]
        return {0: idx[:, 0], 1: idx[:, p], 2: idx[0, :], 3: idx[p, :]}[face]


class DiscontinuousP1:
    """Discontinuous affine element ``span{1, x - 1/2, y - 1/2}`` on each cell.

    On rectangles the geometry map is affine, so this is the physical
    ``P1`` space.
    """

    continuous = False
    degree = 1
    n_local = 3

    def __repr__(self):
        return "P-1"

    def values(self, pts):
        pts = np.atleast_2d(pts)
        return np.column_stack([np.ones(len(pts)), pts[:, 0] - 0.5, pts[:, 1] - 0.5])

    def grads(self, pts):
        pts = np.atleast_2d(pts)
        g = np.zeros((len(pts), 3, 2))
        g[:, 1, 0] = 1.0
        g[:, 2, 1] = 1.0
        return g

    def hessians(self, pts):
        return np.zeros((len(np.atleast_2d(pts)), 3, 3))


def make_element(name: str):
    name = name.strip().upper()
    if name in ("Q1", "Q2"):
        return LagrangeQ(int(name[1]))
    if name in ("P-1", "DGP1", "P1DG", "DISCONTINUOUS"):
        return DiscontinuousP1()
    raise ValueError(f"unknown element {name!r}")
