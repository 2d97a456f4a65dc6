"""Marching-tetrahedra lookup tables shared by both kernel backends.

Sign code of a tet: ``sum((value_i > 0) << i)``.  Local tet edges are
``TET_EDGES[e] = (i, j)``; local face ``f`` is the face opposite vertex ``f``.
For each code and quad-split option the tables list up to two triangles as
three local edges (the crossing points), plus the local face carrying each
triangle side ``k -> k+1`` (``-1`` for a quad diagonal inside the tet).
"""
import numpy as np

# relative margin by which the second quad diagonal must be shorter to be
# chosen; ties resolve to the first, which keeps splits translation invariant
DIAG_TIE = 1e-10

TET_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], dtype=np.int64)
_EIDX = {tuple(e): k for k, e in enumerate(TET_EDGES.tolist())}


def _edge(i, j):
    return _EIDX[(min(i, j), max(i, j))]


def _build():
    ntri = np.zeros(16, dtype=np.int64)
    tri_edge = np.full((16, 2, 2, 3), -1, dtype=np.int64)
    tri_face = np.full((16, 2, 2, 3), -1, dtype=np.int64)
    diag = np.full((16, 2, 2), -1, dtype=np.int64)
    for code in range(16):
        pos = [i for i in range(4) if code >> i & 1]
        neg = [i for i in range(4) if not code >> i & 1]
        if len(pos) in (0, 4):
            continue
        if len(pos) in (1, 3):
            lone = pos[0] if len(pos) == 1 else neg[0]
            b, c, d = [i for i in range(4) if i != lone]
            edges = [_edge(lone, b), _edge(lone, c), _edge(lone, d)]
            faces = [d, b, c]
            ntri[code] = 1
            for opt in range(2):
                tri_edge[code, opt, 0] = edges
                tri_face[code, opt, 0] = faces
            continue
        a, b = neg
        c, d = pos
        ac, ad, bd, bc = _edge(a, c), _edge(a, d), _edge(b, d), _edge(b, c)
        ntri[code] = 2
        # option 0 splits along ac-bd, option 1 along ad-bc
        tri_edge[code, 0] = [[ac, ad, bd], [ac, bd, bc]]
        tri_face[code, 0] = [[b, c, -1], [-1, a, d]]
        tri_edge[code, 1] = [[ad, bd, bc], [ad, bc, ac]]
        tri_face[code, 1] = [[c, a, -1], [-1, d, b]]
        diag[code, 0] = [ac, bd]
        diag[code, 1] = [ad, bc]
    return ntri, tri_edge, tri_face, diag


NTRI, TRI_EDGE, TRI_FACE, QUAD_DIAG = _build()
