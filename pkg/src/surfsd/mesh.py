"""Structured Kuhn-split background mesh and the active (cut) sub-mesh."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import permutations

import numpy as np

from .errors import BoxTooSmall, ConfigError, EmptySurface

# Kuhn split of the unit cube: one tet per permutation of the axes, all
# sharing the main diagonal (0,0,0)-(1,1,1).  Corner index = i + 2j + 4k.
_KUHN = []
for perm in permutations(range(3)):
    walk = [0]
    for axis in perm:
        walk.append(walk[-1] + (1 << axis))
    _KUHN.append(walk)
_KUHN = np.array(_KUHN)
_CORNERS = np.array([[i & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=float)


def _orient(local):
    """Reorder each local tet so that its signed volume is positive."""
    out = local.copy()
    for row in out:
        p = _CORNERS[row]
        if np.linalg.det(p[1:] - p[0]) < 0:
            row[2], row[3] = row[3], row[2]
    return out


_KUHN = _orient(_KUHN)


@dataclass(frozen=True)
class BackgroundMesh:
    """Uniform grid of ``n^3`` cubes, each split into 6 tetrahedra.

    Node ``(i, j, k)`` has index ``i + (n+1)*(j + (n+1)*k)``; tet ``6*c + m``
    is the ``m``-th Kuhn tet of cell ``c = i + n*(j + n*k)``.  Tets are only
    materialized on demand through :meth:`cell_tets`; ``tets`` builds the
    full list.
    """

    lo: tuple
    hi: tuple
    n: int

    @property
    def spacing(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / self.n

    @property
    def h(self) -> float:
        """Maximum tet diameter (the cube diagonal)."""
        return float(np.linalg.norm(self.spacing))

    @property
    def n_nodes(self) -> int:
        return (self.n + 1) ** 3

    @property
    def n_tets(self) -> int:
        return 6 * self.n**3

    @cached_property
    def nodes(self) -> np.ndarray:
        m = self.n + 1
        k, j, i = np.meshgrid(np.arange(m), np.arange(m), np.arange(m), indexing="ij")
        ijk = np.column_stack([i.ravel(), j.ravel(), k.ravel()])
        return np.asarray(self.lo) + ijk * self.spacing

    def cell_corner_nodes(self, cells) -> np.ndarray:
        cells = np.asarray(cells, dtype=np.int64)
        n, m = self.n, self.n + 1
        i = cells % n
        j = (cells // n) % n
        k = cells // (n * n)
        base = i + m * (j + m * k)
        off = np.array([ci + m * (cj + m * ck) for ci, cj, ck in _CORNERS.astype(int)])
        return base[:, None] + off[None, :]

    def cell_tets(self, cells) -> np.ndarray:
        """Node indices ``(6*len(cells), 4)`` of the tets of ``cells``."""
        corners = self.cell_corner_nodes(cells)
        return corners[:, _KUHN].reshape(-1, 4)

    def tet_nodes(self, tet_ids) -> np.ndarray:
        tet_ids = np.asarray(tet_ids, dtype=np.int64)
        corners = self.cell_corner_nodes(tet_ids // 6)
        return np.take_along_axis(corners, _KUHN[tet_ids % 6], axis=1)

    @cached_property
    def tets(self) -> np.ndarray:
        return self.cell_tets(np.arange(self.n**3))

    def tet_volumes(self, tet_ids=None) -> np.ndarray:
        nodes = self.tets if tet_ids is None else self.tet_nodes(tet_ids)
        x = self.nodes[nodes]
        return np.linalg.det(x[:, 1:] - x[:, :1]) / 6.0

    def tet_diameters(self, tet_ids=None) -> np.ndarray:
        nodes = self.tets if tet_ids is None else self.tet_nodes(tet_ids)
        x = self.nodes[nodes]
        d = np.zeros(len(x))
        for a in range(4):
            for b in range(a + 1, 4):
                d = np.maximum(d, np.linalg.norm(x[:, a] - x[:, b], axis=1))
        return d


def build_background_mesh(box, n: int, surface=None) -> BackgroundMesh:
    """Kuhn-split mesh of ``box = (lo, hi)`` with ``n`` cells per axis.

    With ``surface`` given, checks that the surface lies inside the closed
    box.  Touching is allowed: the unit-box spheroid experiments have the
    equator on the box walls, where all nodal level-set values are >= 0.
    """
    if n < 1:
        raise ConfigError("mesh.n", "need at least one cell per axis")
    lo, hi = (tuple(float(v) for v in b) for b in box)
    if len(lo) != 3 or len(hi) != 3 or any(a >= b for a, b in zip(lo, hi)):
        raise ConfigError("mesh.box", f"invalid box {box!r}")
    if surface is not None:
        bb = surface.bounding_box()
        if bb is not None and (np.any(bb[0] < lo) or np.any(bb[1] > hi)):
            raise BoxTooSmall(
                f"surface bounds [{bb[0]}, {bb[1]}] exceed box [{lo}, {hi}]"
            )
    return BackgroundMesh(lo, hi, int(n))


_TET_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])


@dataclass(frozen=True)
class ActiveMesh:
    """Tets carrying a cut polygon, with contiguous DOF numbering.

    ``dofs[k]`` is the global node of active DOF ``k``; ``dof_map`` is the
    inverse (``-1`` for inactive nodes).  ``tet_dofs`` holds the DOF indices
    of each active tet in the node order of ``tet_nodes``.
    """

    mesh: BackgroundMesh
    tet_ids: np.ndarray
    tet_nodes: np.ndarray
    dofs: np.ndarray
    dof_map: np.ndarray
    tet_dofs: np.ndarray

    @property
    def n_dofs(self) -> int:
        return len(self.dofs)

    @property
    def n_tets(self) -> int:
        return len(self.tet_ids)

    @cached_property
    def faces(self) -> np.ndarray:
        """Interior faces as ``(F, 2)`` pairs of local active-tet indices."""
        tri = np.sort(self.tet_nodes[:, _TET_FACES], axis=2).reshape(-1, 3)
        owner = np.repeat(np.arange(self.n_tets), 4)
        _, inv, counts = np.unique(tri, axis=0, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        shared = counts[inv] == 2
        order = np.argsort(inv[shared], kind="stable")
        pairs = owner[shared][order].reshape(-1, 2)
        return pairs

    @cached_property
    def volumes(self) -> np.ndarray:
        x = self.mesh.nodes[self.tet_nodes]
        return np.linalg.det(x[:, 1:] - x[:, :1]) / 6.0

    def to_global(self, active_dofs):
        return self.dofs[np.asarray(active_dofs)]

    def to_active(self, global_nodes):
        return self.dof_map[np.asarray(global_nodes)]


def extract_active_mesh(mesh: BackgroundMesh, cuts) -> ActiveMesh:
    """Active tets are exactly the parents of the polygons in ``cuts``."""
    if cuts.n_polygons == 0:
        raise EmptySurface("no background tet is cut by the surface")
    tet_ids = np.asarray(cuts.parent)
    tet_nodes = mesh.tet_nodes(tet_ids)
    dofs = np.unique(tet_nodes)
    dof_map = np.full(mesh.n_nodes, -1, dtype=np.int64)
    dof_map[dofs] = np.arange(len(dofs))
    return ActiveMesh(mesh, tet_ids, tet_nodes, dofs, dof_map, dof_map[tet_nodes])
