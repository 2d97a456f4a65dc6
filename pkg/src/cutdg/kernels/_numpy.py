"""Vectorized numpy implementations of the hot kernels."""
import numpy as np

from .tables import DIAG_TIE, NTRI, QUAD_DIAG, TET_EDGES, TRI_EDGE, TRI_FACE


def crossing_points(vals, coords, vids):
    """Zero crossings of the linear interpolant on all 6 edges of each tet.

    Edges are parametrized from the endpoint with the smaller global vertex
    id, so a crossing shared by neighbouring tets is computed bit-identically.
    Entries for edges without a sign change are meaningless.
    """
    i, j = TET_EDGES[:, 0], TET_EDGES[:, 1]
    swap = vids[:, i] > vids[:, j]
    a = np.where(swap, j, i)
    b = np.where(swap, i, j)
    va = np.take_along_axis(vals, a, axis=1)
    vb = np.take_along_axis(vals, b, axis=1)
    xa = np.take_along_axis(coords, a[..., None], axis=1)
    xb = np.take_along_axis(coords, b[..., None], axis=1)
    den = va - vb
    den = np.where(den == 0.0, 1.0, den)
    t = va / den
    return xa + t[..., None] * (xb - xa)


def march_tets(vals, coords, vids):
    """Triangulate the zero level set inside each tet.

    Returns ``points (m, 2, 3, 3)``, ``ntri (m,)``, ``side_face (m, 2, 3)``
    and ``point_edge (m, 2, 3)`` (local edge of each triangle vertex).
    """
    m = vals.shape[0]
    code = ((vals > 0) * (1 << np.arange(4))).sum(axis=1)
    cross = crossing_points(vals, coords, vids)
    d = QUAD_DIAG[code]
    rows = np.arange(m)[:, None]
    diff = cross[rows, d[:, :, 0]] - cross[rows, d[:, :, 1]]
    dl = diff[..., 0] ** 2 + diff[..., 1] ** 2 + diff[..., 2] ** 2
    opt = (dl[:, 1] < dl[:, 0] * (1.0 - DIAG_TIE)).astype(np.int64)
    edges = TRI_EDGE[code, opt]
    faces = TRI_FACE[code, opt]
    pts = cross[np.arange(m)[:, None, None], np.maximum(edges, 0)]
    return pts, NTRI[code], faces, edges


def element_matrices(coef, tet, normal, area, qpts, qw):
    """Surface stiffness ``|K| G P G^T`` and mass matrices per surface element."""
    C = coef[tet]
    G = np.transpose(C[:, 1:, :], (0, 2, 1))
    Gn = np.einsum("kid,kd->ki", G, normal)
    stiff = area[:, None, None] * (np.einsum("kid,kjd->kij", G, G) - Gn[:, :, None] * Gn[:, None, :])
    lam = C[:, None, 0, :] + np.einsum("kqd,kdi->kqi", qpts, C[:, 1:, :])
    mass = area[:, None, None] * np.einsum("q,kqi,kqj->kij", qw, lam, lam)
    return stiff, mass


def element_load(coef, tet, area, qpts, qw, fvals):
    """Per-element load ``|K| sum_q w_q f_q lambda(x_q)``."""
    C = coef[tet]
    lam = C[:, None, 0, :] + np.einsum("kqd,kdi->kqi", qpts, C[:, 1:, :])
    return area[:, None] * np.einsum("q,kq,kqi->ki", qw, fvals, lam)


def _jump_values(coef, pair, qpts):
    Cp, Cm = coef[pair[:, 0]], coef[pair[:, 1]]
    lp = Cp[:, None, 0, :] + np.einsum("kqd,kdi->kqi", qpts, Cp[:, 1:, :])
    lm = Cm[:, None, 0, :] + np.einsum("kqd,kdi->kqi", qpts, Cm[:, 1:, :])
    return np.concatenate([lp, -lm], axis=2)


def edge_matrices(coef, pair, conormal, length, qpts, qw, mean_factor, penalty):
    """Consistency, symmetry and penalty terms on cut edges, ``(n, 8, 8)``.

    ``penalty`` is ``beta_E / h``.
    """
    Cp, Cm = coef[pair[:, 0]], coef[pair[:, 1]]
    fp = mean_factor * np.einsum("kdi,kd->ki", Cp[:, 1:, :], conormal[:, 0])
    fm = mean_factor * np.einsum("kdi,kd->ki", Cm[:, 1:, :], conormal[:, 1])
    flux = np.concatenate([fp, -fm], axis=1)
    J = _jump_values(coef, pair, qpts)
    lw = length[:, None] * qw[None, :]
    Jint = np.einsum("kq,kqi->ki", lw, J)
    cross = flux[:, :, None] * Jint[:, None, :]
    return penalty * np.einsum("kq,kqi,kqj->kij", lw, J, J) - (cross + np.transpose(cross, (0, 2, 1)))


def face_matrices(coef, pair, normal, area, qpts, qw, value_penalty, gamma):
    """Ghost-penalty terms on full interior faces, ``(n, 8, 8)``.

    ``value_penalty`` is ``beta_F / h^2``.
    """
    Cp, Cm = coef[pair[:, 0]], coef[pair[:, 1]]
    gp = np.einsum("kdi,kd->ki", Cp[:, 1:, :], normal)
    gm = np.einsum("kdi,kd->ki", Cm[:, 1:, :], normal)
    g = np.concatenate([gp, -gm], axis=1)
    J = _jump_values(coef, pair, qpts)
    aw = area[:, None] * qw[None, :]
    out = value_penalty * np.einsum("kq,kqi,kqj->kij", aw, J, J)
    return out + gamma * area[:, None, None] * (g[:, :, None] * g[:, None, :])


def scatter_blocks(blocks, block_index, local):
    """Add local ``(n, 4k, 4k)`` matrices into 4x4 ``blocks`` in entity order."""
    n, k, _ = block_index.shape
    loc = local.reshape(n, k, 4, k, 4).transpose(0, 1, 3, 2, 4)
    np.add.at(blocks, block_index, loc)
    return blocks
