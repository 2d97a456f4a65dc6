"""Loop-based numba implementations; same contracts as ``_numpy``."""
import numpy as np
from numba import njit

from .tables import DIAG_TIE, NTRI, QUAD_DIAG, TET_EDGES, TRI_EDGE, TRI_FACE


@njit(cache=True)
def _march(vals, coords, vids, tet_edges, ntri_t, tri_edge_t, tri_face_t, diag_t):
    m = vals.shape[0]
    pts = np.zeros((m, 2, 3, 3))
    ntri = np.zeros(m, dtype=np.int64)
    faces = np.full((m, 2, 3), -1, dtype=np.int64)
    edges = np.full((m, 2, 3), -1, dtype=np.int64)
    cross = np.zeros((6, 3))
    for k in range(m):
        code = 0
        for i in range(4):
            if vals[k, i] > 0:
                code |= 1 << i
        nt = ntri_t[code]
        ntri[k] = nt
        if nt == 0:
            continue
        for e in range(6):
            a = tet_edges[e, 0]
            b = tet_edges[e, 1]
            if vids[k, a] > vids[k, b]:
                a, b = b, a
            den = vals[k, a] - vals[k, b]
            if den == 0.0:
                den = 1.0
            t = vals[k, a] / den
            for d in range(3):
                cross[e, d] = coords[k, a, d] + t * (coords[k, b, d] - coords[k, a, d])
        opt = 0
        if nt == 2:
            l0 = 0.0
            l1 = 0.0
            for d in range(3):
                l0 += (cross[diag_t[code, 0, 0], d] - cross[diag_t[code, 0, 1], d]) ** 2
                l1 += (cross[diag_t[code, 1, 0], d] - cross[diag_t[code, 1, 1], d]) ** 2
            if l1 < l0 * (1.0 - DIAG_TIE):
                opt = 1
        for s in range(2):
            for v in range(3):
                e = tri_edge_t[code, opt, s, v]
                edges[k, s, v] = e
                faces[k, s, v] = tri_face_t[code, opt, s, v]
                if e >= 0:
                    for d in range(3):
                        pts[k, s, v, d] = cross[e, d]
                else:
                    for d in range(3):
                        pts[k, s, v, d] = cross[0, d]
    return pts, ntri, faces, edges


def march_tets(vals, coords, vids):
    return _march(np.ascontiguousarray(vals, dtype=np.float64),
                  np.ascontiguousarray(coords, dtype=np.float64),
                  np.ascontiguousarray(vids, dtype=np.int64),
                  TET_EDGES, NTRI, TRI_EDGE, TRI_FACE, QUAD_DIAG)


@njit(cache=True)
def _basis(C, x, out):
    for i in range(4):
        s = C[0, i]
        for d in range(3):
            s += C[1 + d, i] * x[d]
        out[i] = s


@njit(cache=True)
def element_matrices(coef, tet, normal, area, qpts, qw):
    n = tet.shape[0]
    nq = qw.shape[0]
    stiff = np.zeros((n, 4, 4))
    mass = np.zeros((n, 4, 4))
    lam = np.zeros(4)
    Gn = np.zeros(4)
    for k in range(n):
        C = coef[tet[k]]
        for i in range(4):
            s = 0.0
            for d in range(3):
                s += C[1 + d, i] * normal[k, d]
            Gn[i] = s
        for i in range(4):
            for j in range(4):
                s = 0.0
                for d in range(3):
                    s += C[1 + d, i] * C[1 + d, j]
                stiff[k, i, j] = area[k] * (s - Gn[i] * Gn[j])
        for q in range(nq):
            _basis(C, qpts[k, q], lam)
            for i in range(4):
                for j in range(4):
                    mass[k, i, j] += qw[q] * lam[i] * lam[j]
        for i in range(4):
            for j in range(4):
                mass[k, i, j] *= area[k]
    return stiff, mass


@njit(cache=True)
def element_load(coef, tet, area, qpts, qw, fvals):
    n = tet.shape[0]
    out = np.zeros((n, 4))
    lam = np.zeros(4)
    for k in range(n):
        C = coef[tet[k]]
        for q in range(qw.shape[0]):
            _basis(C, qpts[k, q], lam)
            for i in range(4):
                out[k, i] += qw[q] * fvals[k, q] * lam[i]
        for i in range(4):
            out[k, i] *= area[k]
    return out


@njit(cache=True)
def _jumps(Cp, Cm, x, lp, lm, J):
    _basis(Cp, x, lp)
    _basis(Cm, x, lm)
    for i in range(4):
        J[i] = lp[i]
        J[4 + i] = -lm[i]


@njit(cache=True)
def edge_matrices(coef, pair, conormal, length, qpts, qw, mean_factor, penalty):
    n = pair.shape[0]
    nq = qw.shape[0]
    out = np.zeros((n, 8, 8))
    flux = np.zeros(8)
    Jint = np.zeros(8)
    J = np.zeros(8)
    lp = np.zeros(4)
    lm = np.zeros(4)
    for k in range(n):
        Cp = coef[pair[k, 0]]
        Cm = coef[pair[k, 1]]
        for i in range(4):
            sp = 0.0
            sm = 0.0
            for d in range(3):
                sp += Cp[1 + d, i] * conormal[k, 0, d]
                sm += Cm[1 + d, i] * conormal[k, 1, d]
            flux[i] = mean_factor * sp
            flux[4 + i] = -(mean_factor * sm)
        Jint[:] = 0.0
        for q in range(nq):
            w = length[k] * qw[q]
            _jumps(Cp, Cm, qpts[k, q], lp, lm, J)
            for i in range(8):
                Jint[i] += w * J[i]
                for j in range(8):
                    out[k, i, j] += penalty * (w * J[i] * J[j])
        for i in range(8):
            for j in range(8):
                out[k, i, j] -= flux[i] * Jint[j] + Jint[i] * flux[j]
    return out


@njit(cache=True)
def face_matrices(coef, pair, normal, area, qpts, qw, value_penalty, gamma):
    n = pair.shape[0]
    nq = qw.shape[0]
    out = np.zeros((n, 8, 8))
    g = np.zeros(8)
    J = np.zeros(8)
    lp = np.zeros(4)
    lm = np.zeros(4)
    for k in range(n):
        Cp = coef[pair[k, 0]]
        Cm = coef[pair[k, 1]]
        for i in range(4):
            sp = 0.0
            sm = 0.0
            for d in range(3):
                sp += Cp[1 + d, i] * normal[k, d]
                sm += Cm[1 + d, i] * normal[k, d]
            g[i] = sp
            g[4 + i] = -sm
        for q in range(nq):
            w = area[k] * qw[q]
            _jumps(Cp, Cm, qpts[k, q], lp, lm, J)
            for i in range(8):
                for j in range(8):
                    out[k, i, j] += w * J[i] * J[j]
        for i in range(8):
            for j in range(8):
                out[k, i, j] = value_penalty * out[k, i, j] + gamma * area[k] * (g[i] * g[j])
    return out


@njit(cache=True)
def scatter_blocks(blocks, block_index, local):
    n, kk, _ = block_index.shape
    for e in range(n):
        for a in range(kk):
            for b in range(kk):
                blk = block_index[e, a, b]
                for i in range(4):
                    for j in range(4):
                        blocks[blk, i, j] += local[e, 4 * a + i, 4 * b + j]
    return blocks
