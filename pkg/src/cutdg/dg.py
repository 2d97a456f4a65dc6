"""Discontinuous P1 space on the active mesh and assembly of the surface forms.

Every active tet carries its own four nodal P1 functions, so dofs are
``4 * t + i``.  Matrices are built blockwise: one 4x4 block per tet and two
per interior face (edge terms land in the blocks of the face that hosts the
edge).  Local contributions are added in entity order, which keeps assembly
deterministic and independent of the +/- labelling.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from pyamg.multilevel import MultilevelSolver
from pyamg.relaxation.smoothing import change_smoothers

from . import kernels
from .cutcomplex import CutComplex
from .geometry import ProjectionError, TestCase, closest_point, exact_rhs
from .linalg import DENSE_THRESHOLD, ConvergenceError, SparseSym, cg_solve
from .quadrature import map_segment, map_triangle, segment_rule, triangle_rule

log = logging.getLogger(__name__)

CHUNK = 1 << 15
RESIDUAL_TOL = 1e-10
# a stalled CG iterate is accepted within this factor of the rounding floor
FLOOR_FACTOR = 10.0
# vertex count below which the multigrid hierarchy stops and factorizes
COARSE_SIZE = 2000

_MASS_RULE = triangle_rule(2)
_LOAD_RULE = triangle_rule(4)
_EDGE_RULE = segment_rule(3)
_FACE_RULE = triangle_rule(2)


@dataclass(frozen=True, eq=False)
class DGSpace:
    """Element-local P1 space; ``coef[t]`` gives ``lambda_i = C[0,i] + C[1:,i].x``."""

    active_tets: np.ndarray
    coef: np.ndarray
    block_rows: np.ndarray
    block_cols: np.ndarray

    @property
    def n_tets(self) -> int:
        return len(self.active_tets)

    @property
    def n_dofs(self) -> int:
        return 4 * self.n_tets

    @property
    def dof_map(self) -> np.ndarray:
        return np.arange(self.n_dofs).reshape(-1, 4)

    @property
    def n_blocks(self) -> int:
        return len(self.block_rows)

    def block_of(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Index of block ``(rows, cols)``; every pair must exist."""
        keys = self.block_rows * self.n_tets + self.block_cols
        want = np.asarray(rows, np.int64) * self.n_tets + np.asarray(cols, np.int64)
        pos = np.searchsorted(keys, want)
        pos = np.minimum(pos, len(keys) - 1)
        if not np.all(keys[pos] == want):
            raise KeyError("tet pair without a shared face")
        return pos

    def pair_blocks(self, t0: np.ndarray, t1: np.ndarray) -> np.ndarray:
        """``(n, 2, 2)`` block indices for tet pairs."""
        out = np.empty((len(t0), 2, 2), dtype=np.int64)
        out[:, 0, 0] = self.block_of(t0, t0)
        out[:, 0, 1] = self.block_of(t0, t1)
        out[:, 1, 0] = self.block_of(t1, t0)
        out[:, 1, 1] = self.block_of(t1, t1)
        return out

    def to_csr(self, blocks: np.ndarray) -> sp.csr_matrix:
        idx = np.int32 if 16 * self.n_blocks < 2**31 else np.int64
        indptr = np.zeros(self.n_tets + 1, dtype=idx)
        np.cumsum(np.bincount(self.block_rows, minlength=self.n_tets), out=indptr[1:])
        A = sp.bsr_matrix((blocks, self.block_cols.astype(idx), indptr),
                          shape=(self.n_dofs, self.n_dofs))
        return A.tocsr()

    def zeros(self) -> np.ndarray:
        return np.zeros((self.n_blocks, 4, 4))

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant of ``func`` (vectorized over points) on every active tet."""
        verts = np.linalg.inv(self.coef)[:, :, 1:]  # rows of [1 | X]
        return np.asarray(func(verts.reshape(-1, 3)), float).reshape(-1)


def build_space(cx: CutComplex) -> DGSpace:
    nt = cx.n_active
    ft = cx.face_tets
    rows = np.concatenate([np.arange(nt), ft[:, 0], ft[:, 1]]).astype(np.int64)
    cols = np.concatenate([np.arange(nt), ft[:, 1], ft[:, 0]]).astype(np.int64)
    order = np.argsort(rows * max(nt, 1) + cols, kind="stable")
    return DGSpace(cx.active_tets, cx.tet_coef, rows[order], cols[order])


@dataclass(frozen=True)
class FormParams:
    beta_e: float = 50.0
    beta_f: float = 50.0
    gamma: float = 0.01
    mean_factor: float = 0.5
    h: float = float("nan")


def _chunks(n: int):
    for start in range(0, n, CHUNK):
        yield slice(start, min(start + CHUNK, n))


def _scatter(blocks, block_index, local):
    return kernels.scatter_blocks(blocks, np.ascontiguousarray(block_index),
                                  np.ascontiguousarray(local))


def _element_blocks(cx: CutComplex, space: DGSpace, which: int, blocks=None,
                    diag=None) -> np.ndarray:
    """Element matrices (0 stiffness, 1 mass) added into the diagonal blocks.

    ``diag`` maps tets to block indices; by default ``blocks`` is the full
    block pattern of ``space``.
    """
    if blocks is None:
        blocks = space.zeros()
    if diag is None:
        diag = space.block_of(np.arange(space.n_tets), np.arange(space.n_tets))
    for s in _chunks(cx.n_elements):
        qpts = map_triangle(_MASS_RULE, cx.tri_vertices[s])
        mats = kernels.element_matrices(space.coef, cx.tri_tet[s], cx.tri_normal[s],
                                        cx.tri_area[s], qpts, _MASS_RULE.weights)
        _scatter(blocks, diag[cx.tri_tet[s]].reshape(-1, 1, 1), mats[which])
    return blocks


def _edge_blocks(cx: CutComplex, space: DGSpace, blocks, beta_e: float, mean_factor: float):
    pair = cx.tri_tet[cx.edge_elements]
    index = space.pair_blocks(pair[:, 0], pair[:, 1])
    for s in _chunks(cx.n_edges):
        qpts = map_segment(_EDGE_RULE, cx.edge_points[s])
        mats = kernels.edge_matrices(space.coef, pair[s], cx.edge_conormals[s], cx.edge_length[s],
                                     qpts, _EDGE_RULE.weights, float(mean_factor),
                                     float(beta_e / cx.h))
        _scatter(blocks, index[s], mats)
    return blocks


def assemble_ah(cx: CutComplex, space: DGSpace, beta_e: float, mean_factor: float = 0.5,
                as_blocks: bool = False, out: np.ndarray | None = None):
    """Surface stiffness plus symmetric interior-penalty terms on cut edges.

    With ``out`` the blocks are added into that array.
    """
    if beta_e < 0:
        raise ValueError("beta_e must be nonnegative")
    blocks = _element_blocks(cx, space, 0, out)
    _edge_blocks(cx, space, blocks, beta_e, mean_factor)
    return blocks if as_blocks else space.to_csr(blocks)


def assemble_jh(cx: CutComplex, space: DGSpace, beta_f: float, gamma: float,
                as_blocks: bool = False, out: np.ndarray | None = None):
    """Ghost penalty on full interior faces: value jumps and normal-gradient jumps."""
    if beta_f < 0 or gamma < 0:
        raise ValueError("beta_f and gamma must be nonnegative")
    blocks = space.zeros() if out is None else out
    index = space.pair_blocks(cx.face_tets[:, 0], cx.face_tets[:, 1])
    for s in _chunks(cx.n_faces):
        qpts = map_triangle(_FACE_RULE, cx.face_coords[s])
        mats = kernels.face_matrices(space.coef, cx.face_tets[s], cx.face_normal[s],
                                     cx.face_area[s], qpts, _FACE_RULE.weights,
                                     float(beta_f / cx.h ** 2), float(gamma))
        _scatter(blocks, index[s], mats)
    return blocks if as_blocks else space.to_csr(blocks)


def assemble_mass(cx: CutComplex, space: DGSpace, as_blocks: bool = False):
    """Surface mass matrix; block diagonal, so the CSR form stores only those blocks."""
    if as_blocks:
        return _element_blocks(cx, space, 1)
    nt = space.n_tets
    blocks = _element_blocks(cx, space, 1, np.zeros((nt, 4, 4)), np.arange(nt))
    return sp.bsr_matrix((blocks, np.arange(nt, dtype=np.int32), np.arange(nt + 1, dtype=np.int32)),
                         shape=(space.n_dofs, space.n_dofs)).tocsr()


def _element_rhs(cx: CutComplex, space: DGSpace, rule, fvals) -> np.ndarray:
    """``(f, v)`` per dof; ``fvals`` is an ``(nK, q)`` array or a callable
    mapping mapped quadrature points ``(k, q, 3)`` to values, evaluated chunkwise."""
    out = np.zeros(space.n_dofs)
    vec = out.reshape(-1, 4)
    for s in _chunks(cx.n_elements):
        qpts = map_triangle(rule, cx.tri_vertices[s])
        f = fvals(qpts) if callable(fvals) else fvals[s]
        f = np.broadcast_to(np.asarray(f, float).reshape(-1), (qpts.shape[0] * qpts.shape[1],))
        loc = kernels.element_load(space.coef, cx.tri_tet[s], cx.tri_area[s], qpts,
                                   rule.weights, np.ascontiguousarray(f.reshape(qpts.shape[:2])))
        np.add.at(vec, cx.tri_tet[s], loc)
    return out


def mean_vector(cx: CutComplex, space: DGSpace) -> np.ndarray:
    """``m_i`` = integral of basis function ``i`` over the discrete surface."""
    return _element_rhs(cx, space, _MASS_RULE, np.ones((cx.n_elements, len(_MASS_RULE))))


def project_points(tc: TestCase, pts: np.ndarray) -> np.ndarray:
    """Closest points for an ``(..., 3)`` array; a failure names the offending point."""
    flat = pts.reshape(-1, 3)
    try:
        p = closest_point(tc.level_set, flat)
    except ProjectionError as exc:
        where = "unknown point" if exc.point is None else np.array2string(np.asarray(exc.point))
        raise ProjectionError(f"closest-point projection failed at {where}: {exc}",
                              exc.residual, exc.point) from exc
    return p.reshape(pts.shape)


def assemble_load(cx: CutComplex, space: DGSpace, tc: TestCase, variant: str = "reaction",
                  rhs=None) -> np.ndarray:
    """``(f o p, v)`` with degree-4 quadrature; ``rhs`` overrides the exact right-hand side."""
    if cx.n_elements == 0:
        return np.zeros(space.n_dofs)
    if rhs is None:
        def rhs_at(qpts):
            return exact_rhs(tc, project_points(tc, qpts).reshape(-1, 3), variant)
    else:
        def rhs_at(qpts):
            return rhs(qpts.reshape(-1, 3))
    return _element_rhs(cx, space, _LOAD_RULE, rhs_at)


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    load: np.ndarray
    mean_vector: np.ndarray
    params: FormParams
    info: dict = field(default_factory=dict)
    lattice: np.ndarray | None = None  # integer vertex position of every dof

    @property
    def n_dofs(self) -> int:
        return self.stiffness.shape[0]

    @property
    def area(self) -> float:
        return float(self.mean_vector.sum())


def assemble_system(cx: CutComplex, tc: TestCase | None, beta_e: float = 50.0,
                    beta_f: float = 50.0, gamma: float = 0.01, mean_factor: float = 0.5,
                    variant: str = "reaction", space: DGSpace | None = None) -> AssembledSystem:
    """Stiffness ``a_h + j_h``, mass, load and mean vector on one complex."""
    space = build_space(cx) if space is None else space
    blocks = assemble_ah(cx, space, beta_e, mean_factor, as_blocks=True)
    assemble_jh(cx, space, beta_f, gamma, out=blocks)
    A = space.to_csr(blocks)
    del blocks
    M = assemble_mass(cx, space)
    b = np.zeros(space.n_dofs) if tc is None else assemble_load(cx, space, tc, variant)
    params = FormParams(beta_e, beta_f, gamma, mean_factor, cx.h)
    return AssembledSystem(A, M, b, mean_vector(cx, space), params, lattice=dof_lattice(cx))


def _residual(apply, x, b) -> float:
    bn = np.linalg.norm(b)
    return float(np.linalg.norm(apply(x) - b) / (bn if bn > 0 else 1.0))


def _diagonal_blocks(A, chunk: int = 1 << 18) -> np.ndarray:
    """``(n/4, 4, 4)`` diagonal blocks of a CSR matrix, read in row chunks."""
    nb = A.shape[0] // 4
    D = np.zeros((nb, 4, 4))
    for r0 in range(0, A.shape[0], chunk):
        sub = A[r0:r0 + chunk].tocoo()
        rows = sub.row + r0
        on = rows // 4 == sub.col // 4
        D[rows[on] // 4, rows[on] % 4, sub.col[on] % 4] += sub.data[on]
    return D


def block_jacobi(K, m: np.ndarray | None = None, sigma: float = 0.0, extra=None):
    """Inverse of the 4x4 element blocks on the diagonal of ``K + extra + sigma m m^T``."""
    D = _diagonal_blocks(sp.csr_matrix(K))
    if extra is not None:
        D += _diagonal_blocks(sp.csr_matrix(extra))
    nb = len(D)
    if m is not None:
        mb = m.reshape(nb, 4)
        D += sigma * mb[:, :, None] * mb[:, None, :]
    Dinv = np.linalg.inv(D)
    return lambda r: np.einsum("tij,tj->ti", Dinv, r.reshape(nb, 4)).ravel()


def dof_lattice(cx: CutComplex) -> np.ndarray:
    """Integer lattice coordinates ``(n_dofs, 3)`` of the vertex carrying each dof."""
    x = cx.tet_coords.reshape(-1, 3)
    if len(x) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    return np.rint((x - x.min(axis=0)) / cx.h).astype(np.int64)


def lattice_prolongation(Y: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """P1 interpolation from the lattice of twice the spacing onto the points ``Y``.

    Kuhn meshes are nested under doubling for any integer offset, so every
    fine vertex is a coarse vertex or the midpoint of the coarse edge from
    ``floor(Y/2)`` to ``ceil(Y/2)``.  Returns the prolongation and the coarse
    points it reads.
    """
    lo, hi = Y // 2, -(-Y // 2)
    Yc, inv = np.unique(np.vstack([lo, hi]), axis=0, return_inverse=True)
    m = len(Y)
    P = sp.csr_matrix((np.full(2 * m, 0.5), (np.tile(np.arange(m), 2), inv.ravel())),
                      shape=(m, len(Yc)))
    return P, Yc


def _galerkin(A, P, chunk: int = 1 << 20) -> sp.csr_matrix:
    """``P^T A P``, accumulated over row chunks of ``A``."""
    out = sp.csr_matrix((P.shape[1], P.shape[1]))
    for r0 in range(0, A.shape[0], chunk):
        rows = slice(r0, r0 + chunk)
        out = out + P[rows].T @ (A[rows] @ P)
    return out.tocsr()


def multigrid(K_parts, lattice: np.ndarray, smoother, cycle: str = "W", sweeps: int = 2):
    """Additive auxiliary-space preconditioner for a DG matrix ``sum(K_parts)``.

    The correction lives on continuous P1 functions over the active-mesh
    vertices, reached by copying vertex values into the dofs.  That space is
    coarsened on the doubled lattices down to ``COARSE_SIZE`` vertices, with
    Galerkin operators and symmetric Gauss-Seidel; ``smoother`` handles the
    discontinuous remainder.
    """
    n = len(lattice)
    Y, col = np.unique(lattice, axis=0, return_inverse=True)
    P0 = sp.csr_matrix((np.ones(n), (np.arange(n), col.ravel())), shape=(n, len(Y)))
    Kc = sum(_galerkin(K, P0) for K in K_parts)
    levels = []
    while Kc.shape[0] > COARSE_SIZE:
        P, Yc = lattice_prolongation(Y)
        if len(Yc) > 0.9 * len(Y):
            break
        lvl = MultilevelSolver.Level()
        lvl.A, lvl.P, lvl.R = Kc, P, P.T.tocsr()
        levels.append(lvl)
        Kc, Y = _galerkin(Kc, P), Yc
    lvl = MultilevelSolver.Level()
    lvl.A = Kc
    levels.append(lvl)
    ml = MultilevelSolver(levels, coarse_solver="splu")
    relax = ("gauss_seidel", {"sweep": "symmetric", "iterations": sweeps})
    change_smoothers(ml, presmoother=relax, postsmoother=relax)
    V = ml.aspreconditioner(cycle=cycle)
    log.debug("multigrid levels %s", [lv.A.shape[0] for lv in ml.levels])
    return lambda r: smoother(r) + P0 @ V(P0.T @ r)


def rounding_floor(abs_apply, u: np.ndarray, rhs: np.ndarray) -> float:
    """Smallest relative residual double precision can certify: ``eps || |K||u| + |b| || / ||b||``."""
    bn = np.linalg.norm(rhs)
    return float(np.finfo(float).eps * np.linalg.norm(abs_apply(np.abs(u)) + np.abs(rhs))
                 / (bn if bn > 0 else 1.0))


def solve(system: AssembledSystem, variant: str = "reaction", method: str = "auto",
          precond: str = "multigrid", tol: float = 1e-10,
          max_iter: int | None = None) -> np.ndarray:
    """Coefficients of the discrete solution.

    ``reaction`` solves ``(A + M) u = b``.  ``pure`` solves the mean-free
    problem through ``(A + s m m^T) u = b - mu m`` with ``s = 1/|G_h|`` and
    ``mu = sum(b)/|G_h|``, which is equivalent to the bordered system because
    constants span the kernel of ``A``.  ``method`` is ``dense``, ``direct``
    (sparse LU), ``cg`` or ``auto`` (dense up to 3000 unknowns, else CG).
    CG uses ``precond`` ``multigrid`` (element blocks plus a continuous
    multigrid correction, needs ``system.lattice``), ``block`` (element
    blocks), ``jacobi`` or ``none``.

    The residual must reach ``tol`` relative to the right-hand side, or, when
    CG stalls below that, lie within ``FLOOR_FACTOR`` of the rounding floor.
    """
    n = system.n_dofs
    if n == 0:
        return np.zeros(0)
    A, M, m, b = system.stiffness, system.mass, system.mean_vector, system.load
    if variant == "reaction":
        K = None  # formed only for the factorizing methods
        rhs = b
        apply = lambda x: A @ x + M @ x  # noqa: E731
        diag = A.diagonal() + M.diagonal()
    elif variant == "pure":
        area = system.area
        sigma = 1.0 / area
        rhs = b - (b.sum() / area) * m
        K = A
        apply = lambda x: A @ x + sigma * m * (m @ x)  # noqa: E731
        diag = A.diagonal() + sigma * m * m
    else:
        raise ValueError(f"unknown variant {variant!r}")

    def abs_apply(x):
        out = abs(A) @ x
        if variant == "reaction":
            return out + abs(M) @ x
        return out + sigma * np.abs(m) * (np.abs(m) @ x)

    if method == "auto":
        method = "dense" if n <= DENSE_THRESHOLD else "cg"
    if K is None and method in ("dense", "direct"):
        K = (A + M).tocsr()
    if method == "dense":
        D = K.toarray()
        if variant == "pure":
            D += sigma * np.outer(m, m)
        u = scipy.linalg.solve(D, rhs, assume_a="pos")
    elif method == "direct":
        if variant == "pure":
            col = sp.csc_matrix(m.reshape(-1, 1))
            B = sp.bmat([[A, col], [col.T, None]], format="csc")
            u = spla.splu(B).solve(np.append(rhs, 0.0))[:n]
        else:
            u = spla.splu(K.tocsc()).solve(rhs)
    elif method == "cg":
        if precond == "multigrid" and system.lattice is None:
            log.info("no vertex lattice on this system; using element blocks")
            precond = "block"
        if precond in ("block", "multigrid"):
            blocks = block_jacobi(A, m, sigma) if variant == "pure" else block_jacobi(A, extra=M)
            # the reaction operator also preconditions the pure one: A + M and
            # A + s m m^T are spectrally equivalent once constants are split off
            precond = blocks if precond == "block" else multigrid([A, M], system.lattice, blocks)
        try:
            u = cg_solve(apply, rhs, precond=precond, tol=tol, diag=diag, max_iter=max_iter)
        except ConvergenceError as exc:
            if exc.x is None or exc.residual > FLOOR_FACTOR * rounding_floor(abs_apply, exc.x, rhs):
                raise
            log.warning("%s; accepted at the rounding floor", exc)
            u = exc.x
    else:
        raise ValueError(f"unknown solve method {method!r}")

    res = _residual(apply, u, rhs)
    if res > RESIDUAL_TOL:
        floor = rounding_floor(abs_apply, u, rhs)
        if res > FLOOR_FACTOR * floor:
            raise ConvergenceError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g} "
                                   f"(rounding floor {floor:.1e})", res)
    if variant == "pure":
        drift = abs(m @ u)
        if drift > 1e-10 * system.area * max(np.abs(u).max(), 1.0):
            raise ConvergenceError(f"mean constraint violated: |m.u| = {drift:.3e}", drift)
    return u


def dump_matrix(path, A) -> None:
    """Coordinate text dump: ``row col value`` per line, sorted, 17 significant digits."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with open(path, "w", newline="\n") as fh:
        for r, c, v in zip(C.row[order], C.col[order], C.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")


def check_kernel(A, tol: float = 1e-10) -> float:
    """Relative residual ``|A 1| / |A|_F``; raises if constants are not in the kernel."""
    A = SparseSym.wrap(A).csr if not sp.issparse(A) else A
    fro = sp.linalg.norm(A) if sp.issparse(A) else np.linalg.norm(A)
    r = float(np.linalg.norm(A @ np.ones(A.shape[0])) / (fro if fro > 0 else 1.0))
    if r > tol:
        raise ValueError(f"constant vector is not in the kernel (|A 1|/|A|_F = {r:.3e})")
    return r
