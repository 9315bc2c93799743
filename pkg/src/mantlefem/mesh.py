"""Quadtree meshes of axis-aligned rectangles.

A :class:`Mesh` is a forest of quadtrees, one tree per root block of a
uniform ``nx`` x ``ny`` subdivision of the domain.  A cell at refinement
level ``l`` is addressed by integer indices ``(i, j)`` on the uniform grid of
``nx * 2**l`` by ``ny * 2**l`` cells, which makes neighbour lookups and point
location simple integer arithmetic.

Meshes are immutable: :meth:`Mesh.execute_refinement` returns a new mesh.
Edge neighbours of active cells never differ by more than one level.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

# face numbering used throughout the package: x-, x+, y-, y+
FACE_DIRECTIONS = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True)
class Cell:
    """Geometry of one cell."""

    index: int
    level: int
    x0: float
    y0: float
    hx: float
    hy: float
    active: bool = True

    @property
    def corners(self) -> np.ndarray:
        return np.array([[self.x0, self.y0], [self.x0 + self.hx, self.y0],
                         [self.x0, self.y0 + self.hy],
                         [self.x0 + self.hx, self.y0 + self.hy]])


def cell_size_measures(cell) -> dict:
    """The four candidate definitions of the size ``h_K`` of a cell.

    ``cell`` is a :class:`Cell` or anything with ``hx`` and ``hy``.
    """
    hx, hy = float(cell.hx), float(cell.hy)
    return {
        "diameter": float(np.hypot(hx, hy)),
        "shortest_edge": min(hx, hy),
        # for a rectangle the closest vertex pair is the short edge
        "min_vertex_distance": min(hx, hy),
        "sqrt_area": float(np.sqrt(hx * hy)),
    }


@dataclass
class RefinementReport:
    requested_refine: int = 0
    requested_coarsen: int = 0
    refined: int = 0
    coarsened: int = 0
    overrides: int = 0


@dataclass(eq=False)
class Mesh:
    """Balanced quadtree forest over ``[x0, x1] x [y0, y1]``.

    Cells are stored in flat arrays.  ``level``, ``ij`` and ``parent`` are
    per cell (active or not); ``children`` holds the four children of a
    refined cell ordered like the reference-cell vertices
    ``(0,0), (1,0), (0,1), (1,1)``.
    """

    extents: tuple
    subdivisions: tuple
    level: np.ndarray
    ij: np.ndarray
    parent: np.ndarray
    children: np.ndarray
    report: RefinementReport = field(default_factory=RefinementReport)

    def __post_init__(self):
        self.level = np.asarray(self.level, dtype=np.int64)
        self.ij = np.asarray(self.ij, dtype=np.int64).reshape(-1, 2)
        self.parent = np.asarray(self.parent, dtype=np.int64)
        self.children = np.asarray(self.children, dtype=np.int64).reshape(-1, 4)
        self.active_cells = np.flatnonzero(self.children[:, 0] < 0)
        self._lookup = {(int(l), int(i), int(j)): c for c, (l, (i, j))
                        in enumerate(zip(self.level, self.ij))}
        self._active_position = -np.ones(len(self.level), dtype=np.int64)
        self._active_position[self.active_cells] = np.arange(len(self.active_cells))
        self._neighbors = None

    # ------------------------------------------------------------------
    # construction
    @classmethod
    def create_rectangle(cls, extents, subdivisions) -> "Mesh":
        (x0, x1), (y0, y1) = extents
        nx, ny = subdivisions
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"degenerate domain extents {extents}")
        if nx < 1 or ny < 1:
            raise ValueError("need at least one subdivision per axis")
        jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
        n = nx * ny
        return cls(extents=((float(x0), float(x1)), (float(y0), float(y1))),
                   subdivisions=(int(nx), int(ny)),
                   level=np.zeros(n, dtype=np.int64),
                   ij=np.column_stack([ii.ravel(), jj.ravel()]),
                   parent=-np.ones(n, dtype=np.int64),
                   children=-np.ones((n, 4), dtype=np.int64))

    # ------------------------------------------------------------------
    # geometry
    @property
    def n_active(self) -> int:
        return len(self.active_cells)

    @property
    def area(self) -> float:
        (x0, x1), (y0, y1) = self.extents
        return (x1 - x0) * (y1 - y0)

    @property
    def max_level(self) -> int:
        return int(self.level[self.active_cells].max())

    @property
    def root_size(self) -> tuple:
        (x0, x1), (y0, y1) = self.extents
        return (x1 - x0) / self.subdivisions[0], (y1 - y0) / self.subdivisions[1]

    def cell_geometry(self, cells=None):
        """Origins ``(n, 2)`` and sizes ``(n, 2)`` of the given (default: active) cells."""
        cells = self.active_cells if cells is None else np.asarray(cells)
        hx0, hy0 = self.root_size
        scale = 0.5 ** self.level[cells]
        h = np.column_stack([hx0 * scale, hy0 * scale])
        origin = np.array([self.extents[0][0], self.extents[1][0]]) + self.ij[cells] * h
        return origin, h

    def cell(self, k: int) -> Cell:
        """Geometry of the ``k``-th active cell."""
        c = self.active_cells[k]
        (o, h) = self.cell_geometry([c])
        return Cell(index=int(k), level=int(self.level[c]), x0=o[0, 0], y0=o[0, 1],
                    hx=h[0, 0], hy=h[0, 1], active=True)

    def cells(self):
        return [self.cell(k) for k in range(self.n_active)]

    def cell_centers(self) -> np.ndarray:
        o, h = self.cell_geometry()
        return o + 0.5 * h

    def active_levels(self) -> np.ndarray:
        return self.level[self.active_cells]

    def size_measure(self, which="min_vertex_distance") -> np.ndarray:
        _, h = self.cell_geometry()
        if which == "diameter":
            return np.hypot(h[:, 0], h[:, 1])
        if which in ("shortest_edge", "min_vertex_distance"):
            return h.min(axis=1)
        if which == "sqrt_area":
            return np.sqrt(h[:, 0] * h[:, 1])
        raise ValueError(f"unknown size measure {which!r}")

    # ------------------------------------------------------------------
    # topology
    def _grid_shape(self, level):
        nx, ny = self.subdivisions
        return nx << level, ny << level

    def _find(self, level, i, j):
        """Cell (any state) covering grid position ``(level, i, j)``, searching up the tree."""
        while level >= 0:
            c = self._lookup.get((level, i, j))
            if c is not None:
                return c
            level, i, j = level - 1, i >> 1, j >> 1
        return None

    def neighbors(self):
        """Edge neighbours of every active cell.

        Returns a list (per active cell position) of four lists (per face)
        of active cell positions.  An empty list marks a boundary face; two
        entries mean the neighbour side is refined once more.
        """
        if self._neighbors is not None:
            return self._neighbors
        out = []
        for c in self.active_cells:
            lvl = int(self.level[c])
            i, j = (int(v) for v in self.ij[c])
            gx, gy = self._grid_shape(lvl)
            faces = []
            for f, (di, dj) in enumerate(FACE_DIRECTIONS):
                ni, nj = i + di, j + dj
                if not (0 <= ni < gx and 0 <= nj < gy):
                    faces.append([])
                    continue
                n = self._find(lvl, ni, nj)
                if self.children[n, 0] < 0:
                    faces.append([int(self._active_position[n])])
                    continue
                # neighbour refined: the two children touching this face
                kids = self.children[n]
                touching = {0: (1, 3), 1: (0, 2), 2: (2, 3), 3: (0, 1)}[f]
                faces.append([int(self._active_position[kids[t]]) if self.children[kids[t], 0] < 0
                              else -1 for t in touching])
            out.append(faces)
        self._neighbors = out
        return out

    def is_balanced(self) -> bool:
        """Full scan: edge-adjacent active cells differ by at most one level."""
        return not self._unbalanced_cells()

    def _unbalanced_cells(self):
        """Active cells that must be refined to restore 2:1 balance."""
        bad = set()
        active = set(int(c) for c in self.active_cells)
        for c in self.active_cells:
            lvl = int(self.level[c])
            i, j = (int(v) for v in self.ij[c])
            gx, gy = self._grid_shape(lvl)
            for di, dj in FACE_DIRECTIONS:
                ni, nj = i + di, j + dj
                if not (0 <= ni < gx and 0 <= nj < gy):
                    continue
                n = self._find(lvl, ni, nj)
                if int(n) in active and self.level[n] < lvl - 1:
                    bad.add(int(n))
        return bad

    def edge_level_differences(self) -> np.ndarray:
        """Level differences across every interior face (brute-force scan)."""
        diffs = []
        lv = self.active_levels()
        for k, faces in enumerate(self.neighbors()):
            for nbrs in faces:
                for n in nbrs:
                    if n < 0:
                        diffs.append(99)
                    else:
                        diffs.append(abs(int(lv[k]) - int(lv[n])))
        return np.array(diffs, dtype=int)

    # ------------------------------------------------------------------
    # point location
    def locate(self, points):
        """Active cell position and reference coordinates of each point.

        Raises ``ValueError`` for points outside the domain.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        (x0, x1), (y0, y1) = self.extents
        tol = 1e-12 * max(x1 - x0, y1 - y0)
        outside = ((pts[:, 0] < x0 - tol) | (pts[:, 0] > x1 + tol)
                   | (pts[:, 1] < y0 - tol) | (pts[:, 1] > y1 + tol))
        if outside.any():
            raise ValueError(f"{int(outside.sum())} point(s) outside the domain")
        hx0, hy0 = self.root_size
        cell = -np.ones(len(pts), dtype=np.int64)
        todo = np.arange(len(pts))
        for lvl in range(self.max_level + 1):
            if len(todo) == 0:
                break
            gx, gy = self._grid_shape(lvl)
            i = np.clip(np.floor((pts[todo, 0] - x0) / (hx0 / 2 ** lvl)).astype(np.int64), 0, gx - 1)
            j = np.clip(np.floor((pts[todo, 1] - y0) / (hy0 / 2 ** lvl)).astype(np.int64), 0, gy - 1)
            found = np.zeros(len(todo), dtype=bool)
            for m, (a, b) in enumerate(zip(i, j)):
                c = self._lookup.get((lvl, int(a), int(b)))
                if c is not None and self.children[c, 0] < 0:
                    cell[todo[m]] = self._active_position[c]
                    found[m] = True
            todo = todo[~found]
        origin, h = self.cell_geometry()
        ref = (pts - origin[cell]) / h[cell]
        return cell, np.clip(ref, 0.0, 1.0)

    # ------------------------------------------------------------------
    # refinement
    def refine_global(self, times: int = 1) -> "Mesh":
        mesh = self
        for _ in range(times):
            mesh = mesh.execute_refinement(np.ones(mesh.n_active, dtype=bool))
        return mesh

    def execute_refinement(self, refine_flags=None, coarsen_flags=None) -> "Mesh":
        """Refine and coarsen flagged active cells, keeping 2:1 balance.

        Flags are boolean arrays over active cells.  Refinement is applied
        first and closed under the balance rule; a parent is coarsened only
        if all four children are active, flagged, untouched by refinement,
        and no neighbour is finer than the children.
        """
        n = self.n_active
        refine = np.zeros(n, bool) if refine_flags is None else np.asarray(refine_flags, bool)
        coarsen = np.zeros(n, bool) if coarsen_flags is None else np.asarray(coarsen_flags, bool)
        if refine.shape != (n,) or coarsen.shape != (n,):
            raise ValueError("flags must have one entry per active cell")
        if np.any(refine & coarsen):
            raise ValueError("a cell cannot be flagged for refinement and coarsening")
        report = RefinementReport(requested_refine=int(refine.sum()),
                                  requested_coarsen=int(coarsen.sum()))

        level = list(self.level)
        ij = [tuple(x) for x in self.ij]
        parent = list(self.parent)
        children = [list(x) for x in self.children]
        lookup = dict(self._lookup)

        def split(c):
            l, (i, j) = level[c] + 1, ij[c]
            kids = []
            for dj in (0, 1):
                for di in (0, 1):
                    k = len(level)
                    level.append(l)
                    ij.append((2 * i + di, 2 * j + dj))
                    parent.append(c)
                    children.append([-1, -1, -1, -1])
                    lookup[(l, 2 * i + di, 2 * j + dj)] = k
                    kids.append(k)
            children[c] = kids

        to_refine = set(int(c) for c in self.active_cells[refine])
        forced = 0
        while to_refine:
            for c in sorted(to_refine):
                split(c)
            report.refined += len(to_refine)
            tmp = Mesh(self.extents, self.subdivisions, level, ij, parent, children)
            to_refine = tmp._unbalanced_cells()
            forced += len(to_refine)
        refined_mesh = Mesh(self.extents, self.subdivisions, level, ij, parent, children)

        # coarsening on the refined mesh
        flagged = set(int(c) for c in self.active_cells[coarsen])
        kids_of = refined_mesh.children
        candidates = sorted({int(self.parent[c]) for c in flagged if self.parent[c] >= 0})
        merge = []
        rejected = 0
        for p in candidates:
            kids = kids_of[p]
            if not all(int(k) in flagged and kids_of[k, 0] < 0 for k in kids):
                rejected += sum(int(k) in flagged for k in kids)
                continue
            if refined_mesh._has_finer_neighbor(p):
                rejected += 4
                continue
            merge.append(p)
        report.coarsened = len(merge)
        report.overrides = forced + rejected
        if merge:
            for p in merge:
                children[p] = [-1, -1, -1, -1]
            new = Mesh._compact(self.extents, self.subdivisions, level, ij, parent, children)
        else:
            new = refined_mesh
        new.report = report
        if report.overrides:
            logger.debug("refinement flags overridden for %d cells", report.overrides)
        return new

    def _has_finer_neighbor(self, p):
        """True if a neighbour of refined cell ``p`` is finer than ``p``'s children."""
        lvl = int(self.level[p])
        i, j = (int(v) for v in self.ij[p])
        gx, gy = self._grid_shape(lvl)
        for f, (di, dj) in enumerate(FACE_DIRECTIONS):
            ni, nj = i + di, j + dj
            if not (0 <= ni < gx and 0 <= nj < gy):
                continue
            n = self._lookup.get((lvl, ni, nj))
            if n is None or self.children[n, 0] < 0:
                continue
            touching = {0: (1, 3), 1: (0, 2), 2: (2, 3), 3: (0, 1)}[f]
            if any(self.children[self.children[n, t], 0] >= 0 for t in touching):
                return True
        return False

    @classmethod
    def _compact(cls, extents, subdivisions, level, ij, parent, children):
        """Drop cells whose ancestors were coarsened and renumber."""
        n = len(level)
        keep = np.zeros(n, bool)
        parent = np.asarray(parent)
        children = np.asarray(children)
        stack = [c for c in range(n) if parent[c] < 0]
        while stack:
            c = stack.pop()
            keep[c] = True
            if children[c, 0] >= 0:
                stack.extend(int(k) for k in children[c])
        new_id = -np.ones(n, dtype=np.int64)
        new_id[keep] = np.arange(keep.sum())
        par = parent[keep]
        par = np.where(par >= 0, new_id[np.maximum(par, 0)], -1)
        ch = children[keep]
        ch = np.where(ch >= 0, new_id[np.maximum(ch, 0)], -1)
        return cls(extents, subdivisions, np.asarray(level)[keep], np.asarray(ij)[keep], par, ch)


def create_rectangle(extents, initial_subdivisions) -> Mesh:
    """Uniform mesh of ``initial_subdivisions = (nx, ny)`` level-0 blocks."""
    return Mesh.create_rectangle(extents, initial_subdivisions)


def execute_refinement(mesh: Mesh, refine_flags=None, coarsen_flags=None) -> Mesh:
    return mesh.execute_refinement(refine_flags, coarsen_flags)
