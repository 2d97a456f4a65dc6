"""Discrete surface extraction and cut-geometry entities.

Given nodal level-set values on a background mesh, :func:`extract` builds the
piecewise planar surface (marching tetrahedra), the active tets, the cut edges
shared by surface elements of neighbouring tets, and the interior faces
between active tets.  Entities are stored as parallel arrays on
:class:`CutComplex`; :class:`SurfaceElement` and :class:`CutEdge` are
per-entity views.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .geometry import LevelSet
from .mesh import BackgroundMesh, CUBE_CORNERS
from .kernels.tables import TET_EDGES

log = logging.getLogger(__name__)

SNAP_FACTOR = 1e-12
SLIVER_AREA_FACTOR = 1e-14
SHORT_EDGE_FACTOR = 1e-14

_FACE_LOCAL = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])


@dataclass(frozen=True)
class SurfaceElement:
    parent_tet: int
    vertices: np.ndarray
    area: float
    tangent_normal: np.ndarray


@dataclass(frozen=True)
class CutEdge:
    endpoints: np.ndarray
    plus_element: int
    minus_element: int
    conormal_plus: np.ndarray
    conormal_minus: np.ndarray
    length: float
    parent_face: int


@dataclass(frozen=True)
class InteriorFace:
    vertices: tuple[int, int, int]
    tet_plus: int
    tet_minus: int
    normal: np.ndarray
    area: float


@dataclass(frozen=True, eq=False)
class CutComplex:
    """Active mesh, surface elements, cut edges and interior faces.

    Tet references in ``tri_tet``, ``face_tets`` are local indices into
    ``active_tets`` (global background tet ids, ascending).  Element
    references in ``edge_elements`` are indices into the ``tri_*`` arrays.
    """

    h: float
    active_tets: np.ndarray
    tet_vertex_ids: np.ndarray
    tet_coords: np.ndarray
    tet_coef: np.ndarray
    tri_tet: np.ndarray
    tri_vertices: np.ndarray
    tri_area: np.ndarray
    tri_normal: np.ndarray
    edge_points: np.ndarray
    edge_elements: np.ndarray
    edge_conormals: np.ndarray
    edge_length: np.ndarray
    edge_face: np.ndarray
    face_vertex_ids: np.ndarray
    face_tets: np.ndarray
    face_normal: np.ndarray
    face_area: np.ndarray
    face_coords: np.ndarray
    nodal_levelset: np.ndarray | None = None
    warnings: dict = field(default_factory=dict)

    @property
    def n_active(self) -> int:
        return len(self.active_tets)

    @property
    def n_elements(self) -> int:
        return len(self.tri_area)

    @property
    def n_edges(self) -> int:
        return len(self.edge_length)

    @property
    def n_faces(self) -> int:
        return len(self.face_area)

    def surface_element(self, k: int) -> SurfaceElement:
        return SurfaceElement(int(self.active_tets[self.tri_tet[k]]), self.tri_vertices[k],
                              float(self.tri_area[k]), self.tri_normal[k])

    def cut_edge(self, e: int) -> CutEdge:
        return CutEdge(self.edge_points[e], int(self.edge_elements[e, 0]),
                       int(self.edge_elements[e, 1]), self.edge_conormals[e, 0],
                       self.edge_conormals[e, 1], float(self.edge_length[e]),
                       int(self.edge_face[e]))

    def interior_face(self, f: int) -> InteriorFace:
        return InteriorFace(tuple(int(v) for v in self.face_vertex_ids[f]),
                            int(self.face_tets[f, 0]), int(self.face_tets[f, 1]),
                            self.face_normal[f], float(self.face_area[f]))

    @property
    def surface_elements(self) -> list[SurfaceElement]:
        return [self.surface_element(k) for k in range(self.n_elements)]

    @property
    def cut_edges(self) -> list[CutEdge]:
        return [self.cut_edge(e) for e in range(self.n_edges)]

    @property
    def interior_faces(self) -> list[InteriorFace]:
        return [self.interior_face(f) for f in range(self.n_faces)]

    def with_swapped_labels(self) -> "CutComplex":
        """Same complex with every edge's and face's +/- sides exchanged."""
        return replace(self,
                       edge_elements=self.edge_elements[:, ::-1].copy(),
                       edge_conormals=self.edge_conormals[:, ::-1].copy(),
                       face_tets=self.face_tets[:, ::-1].copy(),
                       face_normal=-self.face_normal)


# ---------------------------------------------------------------------------

def interpolate_levelset(mesh: BackgroundMesh, ls: LevelSet, chunk: int = 1 << 20) -> np.ndarray:
    """Nodal values of ``ls`` with near-zero values snapped to ``+eps``."""
    out = np.empty(mesh.n_vertices)
    for start in range(0, mesh.n_vertices, chunk):
        ids = np.arange(start, min(start + chunk, mesh.n_vertices))
        out[ids] = ls.value(mesh.vertex_coords(ids))
    eps = SNAP_FACTOR * mesh.h
    out[np.abs(out) < eps] = eps
    return out


def _cut_cells(mesh: BackgroundMesh, nodal: np.ndarray) -> np.ndarray:
    n, m = mesh.n, mesh.n + 1
    g = nodal.reshape(m, m, m)  # [k, j, i]
    lo = np.full((n, n, n), np.inf)
    hi = np.full((n, n, n), -np.inf)
    for di, dj, dk in CUBE_CORNERS:
        view = g[dk:dk + n, dj:dj + n, di:di + n]
        np.minimum(lo, view, out=lo)
        np.maximum(hi, view, out=hi)
    return np.flatnonzero((lo < 0) & (hi > 0))


def _offset_keys(mesh: BackgroundMesh, vids: np.ndarray) -> np.ndarray:
    """Integer key of a sorted vertex tuple lying in one cell.

    Uses the smallest id plus base-3 encoded ijk offsets of the others, which
    stays within int64 for any practical grid.
    """
    base = mesh.vertex_ijk(vids[..., 0])
    key = vids[..., 0].astype(np.int64)
    for c in range(1, vids.shape[-1]):
        off = mesh.vertex_ijk(vids[..., c]) - base + 1
        key = key * 27 + off[..., 0] + 3 * off[..., 1] + 9 * off[..., 2]
    return key


def _tet_coefficients(coords: np.ndarray) -> np.ndarray:
    """``C`` with ``lambda_i(x) = C[0, i] + C[1:, i] . x`` per tet."""
    M = np.concatenate([np.ones(coords.shape[:2] + (1,)), coords], axis=2)
    return np.linalg.inv(M)


def extract(mesh: BackgroundMesh, nodal: np.ndarray, conormals: bool = True) -> CutComplex:
    """Marching-tetrahedra extraction of the zero level set of ``nodal``."""
    if np.any(nodal == 0.0):
        raise ValueError("nodal level-set values must be nonzero; use interpolate_levelset")
    h = mesh.h
    warnings = {"sliver_elements": 0, "degenerate_edges": 0, "unmatched_segments": 0}

    cells = _cut_cells(mesh, nodal)
    tet_ids, tet_vids = mesh.cell_tets(cells)
    tet_ids = tet_ids.reshape(-1)
    tet_vids = tet_vids.reshape(-1, 4)
    vals = nodal[tet_vids]
    mixed = (vals.min(axis=1) < 0) & (vals.max(axis=1) > 0)
    tet_ids, tet_vids, vals = tet_ids[mixed], tet_vids[mixed], vals[mixed]
    coords = mesh.vertex_coords(tet_vids)

    pts, ntri, side_face, pt_edge = kernels.march_tets(vals, coords, tet_vids)

    # flatten triangles in (tet, slot) order
    slot = np.arange(2)[None, :] < ntri[:, None]
    src_tet, src_slot = np.nonzero(slot)
    tri = pts[src_tet, src_slot]
    cr = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    area = 0.5 * np.linalg.norm(cr, axis=1)
    keep = area >= SLIVER_AREA_FACTOR * h * h
    if not keep.all():
        warnings["sliver_elements"] = int((~keep).sum())
        log.warning("dropped %d sliver surface elements", warnings["sliver_elements"])
    src_tet, src_slot, tri, cr, area = src_tet[keep], src_slot[keep], tri[keep], cr[keep], area[keep]

    # active tets = tets hosting a surviving element
    act = np.unique(src_tet)
    local = np.full(len(tet_ids), -1, dtype=np.int64)
    local[act] = np.arange(len(act))
    active_tets = tet_ids[act]
    a_vids, a_coords, a_vals = tet_vids[act], coords[act], vals[act]
    coef = _tet_coefficients(a_coords)
    tri_tet = local[src_tet]

    normal = cr / (2.0 * area)[:, None]
    grad_rho = np.einsum("kdi,ki->kd", coef[:, 1:, :], a_vals)
    flip = np.einsum("kd,kd->k", normal, grad_rho[tri_tet]) < 0
    normal[flip] *= -1.0

    faces = _interior_faces(mesh, a_vids, a_coords)
    edges = _match_segments(mesh, tet_vids, src_tet, src_slot, side_face, pt_edge, pts,
                            tri_tet, faces["keys"], h, warnings)

    cx = CutComplex(
        h=h, active_tets=active_tets, tet_vertex_ids=a_vids, tet_coords=a_coords, tet_coef=coef,
        tri_tet=tri_tet, tri_vertices=tri, tri_area=area, tri_normal=normal,
        edge_points=edges["points"], edge_elements=edges["elements"],
        edge_conormals=np.full((len(edges["length"]), 2, 3), np.nan),
        edge_length=edges["length"], edge_face=edges["face"],
        face_vertex_ids=faces["vids"], face_tets=faces["tets"], face_normal=faces["normal"],
        face_area=faces["area"], face_coords=faces["coords"],
        nodal_levelset=nodal, warnings=warnings)
    return compute_conormals(cx) if conormals else cx


def _interior_faces(mesh, a_vids, a_coords):
    nt = len(a_vids)
    fv = np.sort(a_vids[:, _FACE_LOCAL], axis=2).reshape(-1, 3)
    keys = _offset_keys(mesh, fv)
    owner = np.repeat(np.arange(nt), 4)
    order = np.argsort(keys, kind="stable")
    ks = keys[order]
    pair = np.flatnonzero(ks[1:] == ks[:-1])
    t0, t1 = owner[order[pair]], owner[order[pair + 1]]
    tp, tm = np.minimum(t0, t1), np.maximum(t0, t1)
    fverts = fv[order[pair]]
    fkeys = ks[pair]
    # canonical order: by (tet+, tet-)
    o = np.lexsort((tm, tp))
    tp, tm, fverts, fkeys = tp[o], tm[o], fverts[o], fkeys[o]
    fc = mesh.vertex_coords(fverts)
    cr = np.cross(fc[:, 1] - fc[:, 0], fc[:, 2] - fc[:, 0])
    area = 0.5 * np.linalg.norm(cr, axis=1)
    nrm = cr / (2.0 * area)[:, None]
    out_dir = fc.mean(axis=1) - a_coords[tp].mean(axis=1)
    nrm[np.einsum("kd,kd->k", nrm, out_dir) < 0] *= -1.0
    return {"vids": fverts, "keys": fkeys, "tets": np.stack([tp, tm], axis=1),
            "normal": nrm, "area": area, "coords": fc}


def _match_segments(mesh, tet_vids, src_tet, src_slot, side_face, pt_edge, pts, tri_tet,
                    face_keys, h, warnings):
    nk = len(src_tet)
    sides = side_face[src_tet, src_slot]          # (nk, 3)
    kk, ss = np.nonzero(sides >= 0)
    lf = sides[kk, ss]
    t = src_tet[kk]
    # face key of each boundary segment
    fv = np.sort(tet_vids[t][np.arange(len(t))[:, None], _FACE_LOCAL[lf]], axis=1)
    seg_keys = _offset_keys(mesh, fv)
    # endpoints, canonically ordered by the global tet edge they lie on
    e0 = pt_edge[src_tet[kk], src_slot[kk], ss]
    e1 = pt_edge[src_tet[kk], src_slot[kk], (ss + 1) % 3]
    tv = tet_vids[t]
    ek0 = np.sort(np.stack([tv[np.arange(len(t)), TET_EDGES[e0, 0]],
                            tv[np.arange(len(t)), TET_EDGES[e0, 1]]], axis=1), axis=1)
    ek1 = np.sort(np.stack([tv[np.arange(len(t)), TET_EDGES[e1, 0]],
                            tv[np.arange(len(t)), TET_EDGES[e1, 1]]], axis=1), axis=1)
    p0 = pts[src_tet[kk], src_slot[kk], ss]
    p1 = pts[src_tet[kk], src_slot[kk], (ss + 1) % 3]
    swap = (ek1[:, 0] < ek0[:, 0]) | ((ek1[:, 0] == ek0[:, 0]) & (ek1[:, 1] < ek0[:, 1]))
    a = np.where(swap[:, None], p1, p0)
    b = np.where(swap[:, None], p0, p1)

    order = np.argsort(seg_keys, kind="stable")
    ks = seg_keys[order]
    same = ks[1:] == ks[:-1]
    pair = np.flatnonzero(same)
    matched = np.zeros(len(ks), dtype=bool)
    matched[pair] = matched[pair + 1] = True
    unmatched = int((~matched).sum())
    if unmatched:
        warnings["unmatched_segments"] = unmatched
        log.info("%d surface segments without a neighbour (box boundary or dropped slivers)",
                 unmatched)
    s0, s1 = order[pair], order[pair + 1]
    el0, el1 = kk[s0], kk[s1]
    plus = np.minimum(el0, el1)
    minus = np.maximum(el0, el1)
    ends = np.stack([a[s0], b[s0]], axis=1)
    length = np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1)
    good = length >= SHORT_EDGE_FACTOR * h
    if not good.all():
        warnings["degenerate_edges"] = int((~good).sum())
        log.warning("dropped %d degenerate cut edges", warnings["degenerate_edges"])
    plus, minus, ends, length, fk = plus[good], minus[good], ends[good], length[good], ks[pair][good]
    assert np.all(tri_tet[plus] != tri_tet[minus])
    face_order = np.argsort(face_keys, kind="stable")
    pos = np.minimum(np.searchsorted(face_keys[face_order], fk), len(face_keys) - 1)
    face = face_order[pos]
    assert np.all(face_keys[face] == fk), "cut edge without an interior face"
    o = np.lexsort((minus, plus))
    return {"points": ends[o], "elements": np.stack([plus, minus], axis=1)[o],
            "length": length[o], "face": face[o]}


def compute_conormals(cx: CutComplex) -> CutComplex:
    """Populate the in-plane outward co-normals of every cut edge."""
    if cx.n_edges == 0:
        return replace(cx, edge_conormals=np.zeros((0, 2, 3)))
    a, b = cx.edge_points[:, 0], cx.edge_points[:, 1]
    t = (b - a) / cx.edge_length[:, None]
    mid = 0.5 * (a + b)
    out = np.empty((cx.n_edges, 2, 3))
    for s in range(2):
        k = cx.edge_elements[:, s]
        c = np.cross(t, cx.tri_normal[k])
        c /= np.linalg.norm(c, axis=1)[:, None]
        centroid = cx.tri_vertices[k].mean(axis=1)
        c[np.einsum("kd,kd->k", c, mid - centroid) < 0] *= -1.0
        out[:, s] = c
    return replace(cx, edge_conormals=out)


def surface_area(cx: CutComplex) -> float:
    return float(cx.tri_area.sum())


def build_complex(mesh: BackgroundMesh, ls: LevelSet) -> CutComplex:
    return extract(mesh, interpolate_levelset(mesh, ls))


def write_surface(path, cx: CutComplex) -> None:
    """Triangle soup: one line of nine coordinates per surface element."""
    with open(path, "w", newline="\n") as fh:
        for tri in cx.tri_vertices:
            fh.write(" ".join(f"{v:.17g}" for v in tri.reshape(-1)) + "\n")
