"""Plain-text and legacy-VTK output of meshes, fields and indicators."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import Mesh

FMT = "%.17g"


def write_mesh(path, mesh: Mesh) -> None:
    """Header ``nv ne``, then ``x y`` per vertex, then ``i j k`` per element (0-based)."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_elements}\n")
        np.savetxt(fh, mesh.vertices, fmt=FMT)
        np.savetxt(fh, mesh.elements, fmt="%d")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        nv, ne = map(int, fh.readline().split())
        data = fh.read().split()
    v = np.array(data[: 2 * nv], dtype=float).reshape(nv, 2)
    e = np.array(data[2 * nv: 2 * nv + 3 * ne], dtype=np.int64).reshape(ne, 3)
    return Mesh(v, e)


def write_vtk(path, mesh: Mesh, point_data: dict | None = None,
              cell_data: dict | None = None, title: str = "pointtrack") -> None:
    """Legacy ASCII VTK unstructured grid with scalar point and cell data."""
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {mesh.n_elements} {4 * mesh.n_elements}")
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.elements]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += ["5"] * mesh.n_elements

    def block(kind, n, data):
        if not data:
            return
        lines.append(f"{kind} {n}")
        for name, vals in data.items():
            vals = np.asarray(vals, dtype=float).ravel()
            if len(vals) != n:
                raise ValueError(f"{name}: expected {n} values, got {len(vals)}")
            lines.extend([f"SCALARS {name} double 1", "LOOKUP_TABLE default"])
            lines.extend(f"{v:.17g}" for v in vals)

    block("POINT_DATA", mesh.n_vertices, point_data)
    block("CELL_DATA", mesh.n_elements, cell_data)
    Path(path).write_text("\n".join(lines) + "\n")


def write_indicators(path, indicators) -> None:
    """CSV with columns element, E_y, E_p, E_u, combined."""
    n = len(indicators.E_y)
    table = np.column_stack([np.arange(n), indicators.E_y, indicators.E_p,
                             indicators.E_u, indicators.combined])
    np.savetxt(path, table, fmt=["%d"] + [FMT] * 4, delimiter=",",
               header="element,E_y,E_p,E_u,combined", comments="")
