"""Legacy ASCII VTK output of the discrete surface."""

from __future__ import annotations

from pathlib import Path

import numpy as np

FMT = "%.12g"


def polydata_text(cuts, point_data: dict | None = None, cell_data: dict | None = None,
                  title: str = "surfsd surface") -> str:
    """POLYDATA with one triangle or quad per polygon.

    Vertices are not shared between polygons, so ``point_data`` arrays have
    shape ``(P, 4)`` as returned by ``TraceSpace.vertex_values`` (the fourth
    column of triangles is ignored).  ``cell_data`` arrays have shape ``(P,)``.
    """
    nv = np.asarray(cuts.nverts, dtype=int)
    keep = np.arange(4)[None, :] < nv[:, None]  # (P, 4) mask of real vertices
    pts = cuts.verts[keep]
    starts = np.concatenate([[0], np.cumsum(nv)[:-1]])
    out = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {len(pts)} double",
    ]
    out += [" ".join(FMT % c for c in p) for p in pts]
    out.append(f"POLYGONS {len(nv)} {int(nv.sum() + len(nv))}")
    for s, k in zip(starts, nv):
        out.append(" ".join(str(v) for v in [k, *range(s, s + k)]))
    if point_data:
        out.append(f"POINT_DATA {len(pts)}")
        for name, vals in point_data.items():
            v = np.asarray(vals, dtype=float)[keep]
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [FMT % x for x in v]
    if cell_data:
        out.append(f"CELL_DATA {len(nv)}")
        for name, vals in cell_data.items():
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [FMT % x for x in np.asarray(vals, dtype=float)]
    return "\n".join(out) + "\n"


def write_surface_vtk(path, space, u_dofs=None, title: str = "surfsd surface") -> Path:
    point = {"u": space.vertex_values(u_dofs)} if u_dofs is not None else None
    cell = {"parent_tet": space.cuts.parent, "area": space.cuts.areas}
    path = Path(path)
    path.write_text(polydata_text(space.cuts, point, cell, title), encoding="utf-8")
    return path


def read_polydata(path):
    """Minimal reader for files produced here: ``(points, polygons, point scalars)``."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    i = 0
    points, polys, scalars = None, [], {}
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        if parts[0] == "POINTS":
            n = int(parts[1])
            points = np.array([[float(x) for x in lines[i + 1 + k].split()] for k in range(n)])
            i += n + 1
        elif parts[0] == "POLYGONS":
            n = int(parts[1])
            polys = [[int(x) for x in lines[i + 1 + k].split()[1:]] for k in range(n)]
            i += n + 1
        elif parts[0] == "POINT_DATA":
            n = int(parts[1])
            i += 1
            while i < len(lines) and lines[i].startswith("SCALARS"):
                name = lines[i].split()[1]
                scalars[name] = np.array([float(x) for x in lines[i + 2:i + 2 + n]])
                i += 2 + n
        else:
            i += 1
    return points, polys, scalars
