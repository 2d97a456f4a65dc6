"""Structured tetrahedral background mesh of a box (Kuhn subdivision).

The mesh is described by its box and cell count; vertex coordinates and tet
connectivity follow from index arithmetic.  Full connectivity arrays are
materialized lazily, so fine meshes can be used through ``cell_tets`` without
ever allocating all ``6 n^3`` tetrahedra.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

BOUNDARY = -1


def _kuhn_local_tets() -> np.ndarray:
    """The 6 Kuhn tets of the unit cube as corner indices ``i + 2j + 4k``.

    Each tet walks from corner 0 to corner 7 along one axis permutation; all
    are returned positively oriented.
    """
    corners = np.array([[i & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=float)
    tets = []
    for perm in itertools.permutations(range(3)):
        path = [0]
        c = 0
        for axis in perm:
            c |= 1 << axis
            path.append(c)
        x = corners[path]
        vol = np.linalg.det(x[1:] - x[0])
        if vol < 0:
            path[2], path[3] = path[3], path[2]
        tets.append(path)
    return np.array(tets, dtype=np.int64)


KUHN_TETS = _kuhn_local_tets()
CUBE_CORNERS = np.array([[i & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=np.int64)


@dataclass(frozen=True)
class MeshSpec:
    center: tuple[float, float, float]
    halfwidth: float
    n: int

    @property
    def h(self) -> float:
        return 2.0 * self.halfwidth / self.n


def refine(spec: MeshSpec) -> MeshSpec:
    """Halve the cell size of the same box."""
    return MeshSpec(spec.center, spec.halfwidth, 2 * spec.n)


@dataclass(frozen=True, eq=False)
class BackgroundMesh:
    center: np.ndarray
    halfwidth: float
    n: int

    @property
    def spec(self) -> MeshSpec:
        return MeshSpec(tuple(float(c) for c in self.center), self.halfwidth, self.n)

    @property
    def h(self) -> float:
        return 2.0 * self.halfwidth / self.n

    @property
    def box(self) -> tuple[np.ndarray, float]:
        return self.center, self.halfwidth

    @property
    def origin(self) -> np.ndarray:
        return self.center - self.halfwidth

    @property
    def n_vertices(self) -> int:
        return (self.n + 1) ** 3

    @property
    def n_cells(self) -> int:
        return self.n**3

    @property
    def n_tets(self) -> int:
        return 6 * self.n**3

    # -- index arithmetic ---------------------------------------------------
    def vertex_index(self, ijk: np.ndarray) -> np.ndarray:
        m = self.n + 1
        ijk = np.asarray(ijk, dtype=np.int64)
        return ijk[..., 0] + m * (ijk[..., 1] + m * ijk[..., 2])

    def vertex_ijk(self, vid: np.ndarray) -> np.ndarray:
        m = self.n + 1
        vid = np.asarray(vid, dtype=np.int64)
        return np.stack([vid % m, (vid // m) % m, vid // (m * m)], axis=-1)

    def vertex_coords(self, vid: np.ndarray) -> np.ndarray:
        return self.origin + self.h * self.vertex_ijk(vid)

    def cell_ijk(self, cid: np.ndarray) -> np.ndarray:
        n = self.n
        cid = np.asarray(cid, dtype=np.int64)
        return np.stack([cid % n, (cid // n) % n, cid // (n * n)], axis=-1)

    def cell_tets(self, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Global tet ids ``(m, 6)`` and vertex ids ``(m, 6, 4)`` of the given cells."""
        cells = np.asarray(cells, dtype=np.int64)
        corner_ids = self.vertex_index(self.cell_ijk(cells)[:, None, :] + CUBE_CORNERS[None])
        tet_ids = 6 * cells[:, None] + np.arange(6)[None, :]
        return tet_ids, corner_ids[:, KUHN_TETS]

    def tet_vertex_ids(self, tets: np.ndarray) -> np.ndarray:
        tets = np.asarray(tets, dtype=np.int64)
        cells, local = np.divmod(tets, 6)
        corner_ids = self.vertex_index(self.cell_ijk(cells)[:, None, :] + CUBE_CORNERS[None])
        return np.take_along_axis(corner_ids, KUHN_TETS[local], axis=1)

    def grid_coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """1-D coordinate lines along x, y and z."""
        t = np.arange(self.n + 1) * self.h
        o = self.origin
        return o[0] + t, o[1] + t, o[2] + t

    # -- materialized connectivity ----------------------------------------
    @cached_property
    def vertices(self) -> np.ndarray:
        return self.vertex_coords(np.arange(self.n_vertices))

    @cached_property
    def tets(self) -> np.ndarray:
        return self.cell_tets(np.arange(self.n_cells))[1].reshape(-1, 4)

    @cached_property
    def _face_data(self):
        tets = self.tets
        local = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
        keys = np.sort(tets[:, local], axis=2).reshape(-1, 3)
        faces, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        owner = np.repeat(np.arange(tets.shape[0]), 4)
        face_tets = np.full((faces.shape[0], 2), BOUNDARY, dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        inv_sorted = inverse[order]
        first = np.ones(order.size, dtype=bool)
        first[1:] = inv_sorted[1:] != inv_sorted[:-1]
        face_tets[inv_sorted[first], 0] = owner[order[first]]
        face_tets[inv_sorted[~first], 1] = owner[order[~first]]
        return faces, face_tets, inverse.reshape(-1, 4)

    @property
    def faces(self) -> np.ndarray:
        """Sorted vertex triples, one row per face."""
        return self._face_data[0]

    @property
    def face_tets(self) -> np.ndarray:
        """``(tet+, tet-)`` per face; ``tet-`` is ``BOUNDARY`` on the box surface."""
        return self._face_data[1]

    @property
    def tet_faces(self) -> np.ndarray:
        """Face indices per tet; column ``i`` is the face opposite local vertex ``i``."""
        return self._face_data[2]

    def tet_volumes(self, tets: np.ndarray | None = None) -> np.ndarray:
        vids = self.tets if tets is None else self.tet_vertex_ids(tets)
        x = self.vertex_coords(vids)
        return np.linalg.det(x[:, 1:] - x[:, :1]) / 6.0


def build_box_mesh(center, halfwidth: float, n_cells_per_axis: int) -> BackgroundMesh:
    if n_cells_per_axis < 1:
        raise ValueError("n_cells_per_axis must be >= 1")
    return BackgroundMesh(np.asarray(center, dtype=float).reshape(3), float(halfwidth),
                          int(n_cells_per_axis))


def from_spec(spec: MeshSpec) -> BackgroundMesh:
    return build_box_mesh(spec.center, spec.halfwidth, spec.n)


def write_vtk(path, vertices: np.ndarray, tets: np.ndarray, cell_data: dict | None = None) -> None:
    """Legacy ASCII unstructured-grid file with tetrahedral cells."""
    with open(path, "w", newline="\n") as fh:
        fh.write("# vtk DataFile Version 3.0\ncutdg mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(vertices)} double\n")
        for p in vertices:
            fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        fh.write(f"CELLS {len(tets)} {5 * len(tets)}\n")
        for t in tets:
            fh.write(f"4 {t[0]} {t[1]} {t[2]} {t[3]}\n")
        fh.write(f"CELL_TYPES {len(tets)}\n")
        fh.write("10\n" * len(tets))
        if cell_data:
            fh.write(f"CELL_DATA {len(tets)}\n")
            for name, values in cell_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in values:
                    fh.write(f"{v:.17g}\n")


def write_mesh_vtk(path, mesh: BackgroundMesh, tets: np.ndarray | None = None) -> None:
    """Dump ``mesh`` (or the listed global tets only) compacted to used vertices."""
    vids = mesh.tets if tets is None else mesh.tet_vertex_ids(tets)
    used, local = np.unique(vids, return_inverse=True)
    write_vtk(path, mesh.vertex_coords(used), local.reshape(-1, 4))
