"""Discrete surface: marching tetrahedra, cut-polygon quadrature, edge adjacency."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateInput, NotWatertight

PERTURBATION = 1e-12  # relative to h
MIN_AREA = 1e-14  # relative to h^2
MIN_SEGMENT = 1e-12  # relative to h
ORPHAN_SEGMENT = 1e-6  # relative to h


def _edge_table():
    """Per sign pattern (bit i set = vertex i negative): cyclic cut edges."""
    table = np.full((16, 4, 2), -1, dtype=np.int64)
    counts = np.zeros(16, dtype=np.int64)
    for pat in range(16):
        neg = [i for i in range(4) if pat >> i & 1]
        pos = [i for i in range(4) if not pat >> i & 1]
        if len(neg) in (1, 3):
            odd, rest = (neg[0], pos) if len(neg) == 1 else (pos[0], neg)
            edges = [(odd, r) for r in rest]
        elif len(neg) == 2:
            (p, q), (r, s) = neg, pos
            edges = [(p, r), (p, s), (q, s), (q, r)]
        else:
            continue
        counts[pat] = len(edges)
        table[pat, : len(edges)] = edges
        if len(edges) == 3:
            table[pat, 3] = edges[2]
    return table, counts


_EDGES, _NVERTS = _edge_table()


@dataclass(frozen=True)
class CutPolygon:
    parent_tet: int
    vertices: np.ndarray
    n_h: np.ndarray
    area: float


@dataclass(frozen=True)
class SurfaceQuadrature:
    """Points on the cut polygons, sorted by owning polygon."""

    points: np.ndarray
    weights: np.ndarray
    owner: np.ndarray

    def polygon_sums(self, values, n_polygons):
        return np.bincount(self.owner, weights=values, minlength=n_polygons)


def _newell(verts):
    """Vector area of closed polygons ``(M, k, 3)``."""
    nxt = np.roll(verts, -1, axis=1)
    return 0.5 * np.cross(verts, nxt).sum(axis=1)


def _march(x, vals, nodes=None):
    """Vectorized marching tetrahedra on ``(M, 4, 3)`` vertices.

    Returns the index of the tets that are cut and, for those, vertices
    ``(C, 4, 3)`` (triangles repeat their last vertex), vertex counts, the
    background edges ``(C, 4, 2)`` carrying each vertex, unit normals and
    areas.  Crossing points are computed from the lower-numbered node of
    each edge so that neighbours produce bitwise identical points.
    """
    neg = vals < 0
    pattern = (neg * (1 << np.arange(4))).sum(axis=1)
    cut = np.flatnonzero(_NVERTS[pattern] > 0)
    pat = pattern[cut]
    le = _EDGES[pat]  # (C, 4, 2) local vertex pairs
    if nodes is None:
        nodes = np.broadcast_to(np.arange(4), vals.shape)
    g = np.take_along_axis(nodes[cut][:, None, :], le.reshape(len(cut), 1, 8), axis=2)
    g = g.reshape(len(cut), 4, 2)
    swap = g[..., 0] > g[..., 1]
    la = np.where(swap, le[..., 1], le[..., 0])
    lb = np.where(swap, le[..., 0], le[..., 1])
    rows = np.arange(len(cut))[:, None]
    xc, vc = x[cut], vals[cut]
    fa, fb = vc[rows, la], vc[rows, lb]
    lam = fa / (fa - fb)
    xa, xb = xc[rows, la], xc[rows, lb]
    verts = xa + lam[..., None] * (xb - xa)
    edges = np.sort(g, axis=2)

    nverts = _NVERTS[pat]
    vec_area = _newell(verts)
    area = np.linalg.norm(vec_area, axis=1)
    # n_h is the gradient direction of the linear interpolant: exact for the
    # polygon's plane and free of the rounding Newell suffers on slivers
    grad = np.linalg.solve(xc[:, 1:] - xc[:, :1], (vc[:, 1:] - vc[:, :1])[..., None])[..., 0]
    normal = grad / np.linalg.norm(grad, axis=1)[:, None]
    # vertex order counter-clockwise about n_h
    flip = np.einsum("ij,ij->i", normal, vec_area) < 0
    if np.any(flip):
        tri = flip & (nverts == 3)
        quad = flip & (nverts == 4)
        verts[tri] = verts[tri][:, [2, 1, 0, 0]]
        edges[tri] = edges[tri][:, [2, 1, 0, 0]]
        verts[quad] = verts[quad][:, ::-1]
        edges[quad] = edges[quad][:, ::-1]
    return cut, verts, nverts, edges, normal, area


def marching_tet(vertices, values):
    """Cut polygon of one tet, or ``None`` when all values share a sign."""
    values = np.asarray(values, dtype=float).reshape(1, 4)
    if np.any(values == 0.0):
        raise DegenerateInput("level-set value exactly zero at a tet vertex")
    x = np.asarray(vertices, dtype=float).reshape(1, 4, 3)
    cut, verts, nverts, _, normal, area = _march(x, values)
    if len(cut) == 0:
        return None
    k = int(nverts[0])
    return CutPolygon(-1, verts[0, :k].copy(), normal[0], float(area[0]))


def sample_level_set(mesh, surface) -> np.ndarray:
    """Nodal level-set values; near-zero values are pushed to ``+sigma``."""
    phi = surface.level_set_value(mesh.nodes)
    sigma = PERTURBATION * mesh.h
    return np.where(np.abs(phi) < sigma, sigma, phi)


@dataclass(frozen=True)
class EdgeSet:
    """Interior edges of the polygon complex.

    ``polys[e] = (K1, K2)``; ``conormals[e, s]`` is the outward in-plane
    conormal of polygon ``polys[e, s]`` on segment ``segments[e]``.
    """

    polys: np.ndarray
    segments: np.ndarray
    conormals: np.ndarray

    def __len__(self):
        return len(self.polys)


@dataclass(frozen=True)
class CutSurfaceMesh:
    """Piecewise-planar surface, one polygon per cut tet (sorted by tet id)."""

    mesh: object
    values: np.ndarray
    parent: np.ndarray
    nverts: np.ndarray
    verts: np.ndarray
    vert_edges: np.ndarray
    normals: np.ndarray
    areas: np.ndarray

    @property
    def n_polygons(self) -> int:
        return len(self.parent)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    def polygon(self, i) -> CutPolygon:
        k = int(self.nverts[i])
        return CutPolygon(int(self.parent[i]), self.verts[i, :k].copy(), self.normals[i].copy(),
                          float(self.areas[i]))

    @property
    def polygons(self):
        return [self.polygon(i) for i in range(self.n_polygons)]

    @cached_property
    def centroids(self) -> np.ndarray:
        k = self.nverts[:, None].astype(float)
        s = self.verts.sum(axis=1) - np.where(self.nverts == 3, 1.0, 0.0)[:, None] * self.verts[:, 3]
        return s / k

    def segment_list(self):
        """Boundary segments ``(owner, vertex keys a, b, p0, p1)`` of all polygons."""
        owners, ka, kb, p0, p1 = [], [], [], [], []
        nn = np.int64(self.mesh.n_nodes)
        key = self.vert_edges[..., 0] * nn + self.vert_edges[..., 1]
        for k in (3, 4):
            sel = np.flatnonzero(self.nverts == k)
            for i in range(k):
                j = (i + 1) % k
                owners.append(sel)
                ka.append(key[sel, i])
                kb.append(key[sel, j])
                p0.append(self.verts[sel, i])
                p1.append(self.verts[sel, j])
        return (np.concatenate(owners), np.concatenate(ka), np.concatenate(kb),
                np.concatenate(p0), np.concatenate(p1))

    @cached_property
    def edges(self) -> EdgeSet:
        owner, ka, kb, p0, p1 = self.segment_list()
        length = np.linalg.norm(p1 - p0, axis=1)
        pair = np.column_stack([np.minimum(ka, kb), np.maximum(ka, kb)])
        _, inv, counts = np.unique(pair, axis=0, return_inverse=True, return_counts=True)
        cnt = counts[inv.ravel()]
        # segments bordering a discarded sub-area polygon are unpaired but of
        # perturbation size; drop those together with vanishing segments
        keep = (length >= MIN_SEGMENT * self.mesh.h) & ~((cnt == 1) & (length < ORPHAN_SEGMENT * self.mesh.h))
        owner, p0, p1, pair = owner[keep], p0[keep], p1[keep], pair[keep]
        _, inv, counts = np.unique(pair, axis=0, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        if np.any(counts != 2):
            bad = int(np.sum(counts != 2))
            raise NotWatertight(f"{bad} polygon segment(s) without exactly one neighbour")
        order = np.argsort(inv, kind="stable")
        owner, p0, p1 = owner[order], p0[order], p1[order]
        polys = owner.reshape(-1, 2)
        t = p1 - p0
        t /= np.linalg.norm(t, axis=1)[:, None]
        # polygons are counter-clockwise about n_h, so t x n_h points outward
        conormal = np.cross(t, self.normals[owner])
        conormal /= np.linalg.norm(conormal, axis=1)[:, None]
        segments = np.stack([p0, p1], axis=1).reshape(-1, 2, 2, 3)[:, 0]
        return EdgeSet(polys, segments, conormal.reshape(-1, 2, 3))

    def euler_characteristic(self) -> int:
        """``V - E + F`` of the polygon complex (vertices merged per edge record)."""
        e = self.edges
        seg = e.segments.reshape(-1, 3)
        v = len(np.unique(np.round(seg / (1e-9 * self.mesh.h)), axis=0))
        return v - len(e) + self.n_polygons


def build_cut_surface(mesh, values) -> CutSurfaceMesh:
    """Cut every background tet whose vertex values change sign."""
    values = np.asarray(values, dtype=float)
    if np.any(values == 0.0):
        raise DegenerateInput("unperturbed zero level-set values")
    n = mesh.n
    corner_vals = values[mesh.cell_corner_nodes(np.arange(n**3))]
    mixed = np.flatnonzero((corner_vals.min(axis=1) < 0) & (corner_vals.max(axis=1) > 0))
    tet_nodes = mesh.cell_tets(mixed)
    tet_ids = (6 * mixed[:, None] + np.arange(6)).ravel()
    x = mesh.nodes[tet_nodes]
    cut, verts, nverts, edges, normals, areas = _march(x, values[tet_nodes], tet_nodes)
    keep = areas >= MIN_AREA * mesh.h**2
    sel = cut[keep]
    return CutSurfaceMesh(
        mesh=mesh,
        values=values,
        parent=tet_ids[sel],
        nverts=nverts[keep],
        verts=verts[keep],
        vert_edges=edges[keep],
        normals=normals[keep],
        areas=areas[keep],
    )


# degree-2 rule on a triangle: barycentric points (2/3, 1/6, 1/6) and perms
_TRI_BARY = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])


def _fan_rule(verts, k, centroid):
    """Points/weights of the centroid fan of polygons ``verts[:, :k]``."""
    pts, wts = [], []
    for i in range(k):
        a, b = verts[:, i], verts[:, (i + 1) % k]
        area = 0.5 * np.linalg.norm(np.cross(a - centroid, b - centroid), axis=1)
        tri = np.stack([centroid, a, b], axis=1)  # (M, 3, 3)
        pts.append(np.einsum("qj,mjd->mqd", _TRI_BARY, tri))
        wts.append(np.repeat(area[:, None] / 3.0, 3, axis=1))
    return np.concatenate(pts, axis=1), np.concatenate(wts, axis=1)


def surface_quadrature(cuts: CutSurfaceMesh) -> SurfaceQuadrature:
    """Degree-2 quadrature on all polygons, ordered by polygon index."""
    points, weights, owner = [], [], []
    for k in (3, 4):
        sel = np.flatnonzero(cuts.nverts == k)
        if len(sel) == 0:
            continue
        p, w = _fan_rule(cuts.verts[sel], k, cuts.centroids[sel])
        points.append(p.reshape(-1, 3))
        weights.append(w.ravel())
        owner.append(np.repeat(sel, 3 * k))
    owner = np.concatenate(owner)
    order = np.argsort(owner, kind="stable")
    return SurfaceQuadrature(
        np.concatenate(points)[order], np.concatenate(weights)[order], owner[order]
    )


def polygon_quadrature(polygon: CutPolygon, degree: int = 2) -> SurfaceQuadrature:
    if degree != 2:
        raise ValueError("only the degree-2 rule is provided")
    v = np.asarray(polygon.vertices, dtype=float)[None]
    k = v.shape[1]
    p, w = _fan_rule(v, k, v.mean(axis=1))
    return SurfaceQuadrature(p[0], w[0], np.zeros(3 * k, dtype=np.int64))
