"""Output writers: statistics CSV and legacy-ASCII VTK unstructured grids."""
from __future__ import annotations

import csv

import numpy as np

from ..fem import FunctionSpace, evaluate_at_points
from ..transport import FINITE_STRAIN_FIELDS, strain_from_fields

#: VTK cell type of a bilinear quadrilateral
VTK_QUAD = 9


class StatisticsWriter:
    """Append rows with a fixed header to a CSV file (flushed after every row)."""

    def __init__(self, path, columns=None):
        from .statistics import COLUMNS
        self.path = path
        self.columns = tuple(columns or COLUMNS)
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.DictWriter(self._fh, fieldnames=self.columns, extrasaction="ignore")
        self._writer.writeheader()
        self._fh.flush()

    def write(self, row: dict):
        self._writer.writerow({c: row.get(c, "") for c in self.columns})
        self._fh.flush()

    def close(self):
        if not self._fh.closed:
            self._fh.close()


def write_statistics(rows, path, columns=None):
    """Write all rows at once (header plus one line per row)."""
    w = StatisticsWriter(path, columns)
    try:
        for r in rows:
            w.write(r)
    finally:
        w.close()


def read_statistics(path):
    """Read a statistics CSV back; numeric entries become floats."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        conv = {}
        for k, v in r.items():
            try:
                conv[k] = float(v)
            except (TypeError, ValueError):
                conv[k] = v
        out.append(conv)
    return out


# ----------------------------------------------------------------------
def _vertex_layout(mesh):
    """Unique vertex coordinates and per-cell VTK quad connectivity."""
    q1 = FunctionSpace(mesh, "Q1", 1)
    conn = q1.cell_nodes[:, [0, 1, 3, 2]]  # lexicographic -> counter-clockwise
    return q1.node_points, conn


def write_vtk_arrays(path, points, cells, point_data=None, cell_data=None, title="mantlefem"):
    """Write a 2D quadrilateral mesh with scalar/vector data as legacy ASCII VTK."""
    point_data = point_data or {}
    cell_data = cell_data or {}
    npts, ncell = len(points), len(cells)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {npts} double"]
    lines += [f"{x:.16g} {y:.16g} 0" for x, y in points]
    lines.append(f"CELLS {ncell} {5 * ncell}")
    lines += ["4 " + " ".join(str(int(i)) for i in c) for c in cells]
    lines.append(f"CELL_TYPES {ncell}")
    lines += [str(VTK_QUAD)] * ncell

    def block(data, n):
        out = []
        for name, arr in data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape[0] != n:
                raise ValueError(f"data {name!r} has {arr.shape[0]} entries, expected {n}")
            if arr.ndim == 1:
                out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                out += [f"{v:.10g}" for v in arr]
            else:
                vec = np.zeros((n, 3))
                vec[:, :arr.shape[1]] = arr
                out.append(f"VECTORS {name} double")
                out += [f"{a:.10g} {b:.10g} {c:.10g}" for a, b, c in vec]
        return out

    if point_data:
        lines.append(f"POINT_DATA {npts}")
        lines += block(point_data, npts)
    if cell_data:
        lines.append(f"CELL_DATA {ncell}")
        lines += block(cell_data, ncell)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_counts(path):
    """``(n_points, n_cells)`` of a legacy VTK file (used for round-trip checks)."""
    npts = ncell = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("POINTS"):
                npts = int(line.split()[1])
            elif line.startswith("CELLS"):
                ncell = int(line.split()[1])
    return npts, ncell


def write_vtk(sim, path):
    """Write the state of a simulation: point fields, strain glyphs and cell coefficients."""
    points, cells = _vertex_layout(sim.mesh)

    def at_points(vec, space):
        return evaluate_at_points(vec, space, points)[0]

    pd = {"velocity": at_points(sim.u, sim.disc.velocity),
          "pressure": at_points(sim.p, sim.disc.pressure)[:, 0],
          "temperature": at_points(sim.T, sim.Tspace)[:, 0]}
    for name in sim.composition_names:
        pd[name] = at_points(sim.composition(name), sim.Cspace)[:, 0]
    if all(n in sim.composition_names for n in FINITE_STRAIN_FIELDS):
        F = np.column_stack([pd[n] for n in FINITE_STRAIN_FIELDS])
        strain, g1, g2 = strain_from_fields(F)
        pd["natural_strain"] = strain
        pd["stretch_major"] = g1
        pd["stretch_minor"] = g2
    outputs = sim.evaluate_material(sim.T, sim.p, sim.u)[0]
    w = sim.qd.JxW
    cd = {"viscosity": np.sum(outputs.viscosity * w, axis=1) / w.sum(axis=1),
          "density": np.sum(outputs.density * w, axis=1) / w.sum(axis=1),
          "level": sim.mesh.active_levels().astype(float)}
    if sim.last_indicator is not None and len(sim.last_indicator) == sim.mesh.n_active:
        cd["indicator"] = sim.last_indicator.values
    write_vtk_arrays(path, points, cells, pd, cd)
