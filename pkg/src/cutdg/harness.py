"""Error norms, EOC, the convergence and condition-number studies, CSV output."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import dg
from .cutcomplex import CutComplex, build_complex
from .geometry import TestCase, get_case, sphere_levelset, tangential_gradient
from .linalg import condition_number
from .mesh import build_box_mesh
from .quadrature import map_triangle, triangle_rule

log = logging.getLogger(__name__)

N0 = 5
COND_HALFWIDTH = 1.6

_ERR_RULE = triangle_rule(4)


@dataclass
class ErrorReport:
    level: int
    h: float
    n_dofs: int
    err_h1: float
    err_l2: float
    err_linf: float
    eoc_h1: float | None = None
    eoc_l2: float | None = None
    eoc_linf: float | None = None
    info: dict = field(default_factory=dict)


@dataclass
class CondReport:
    level: int
    delta: float
    kappa: float
    beta_e: float = 50.0
    beta_f: float = 50.0
    gamma: float = 0.01
    precond: str = "none"


# ---------------------------------------------------------------------------
# errors

def _evaluate(cx: CutComplex, tets: np.ndarray, coeffs: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Values of the DG function at ``pts (nK, q, 3)``, point row ``k`` inside tet ``tets[k]``."""
    C = cx.tet_coef[tets]
    lam = C[:, None, 0, :] + np.einsum("kqd,kdi->kqi", pts, C[:, 1:, :])
    return np.einsum("kqi,ki->kq", lam, coeffs.reshape(-1, 4)[tets])


def error_norms(cx: CutComplex, coeffs: np.ndarray, tc: TestCase,
                linf_nodes: str = "surface") -> tuple[float, float, float]:
    """``(H1, L2, Linf)`` errors of ``coeffs`` against ``u o p`` on the discrete surface.

    The H1 error is the L2 part plus the tangential-gradient part, with the
    exact surface gradient projected onto each element plane.  ``linf_nodes``
    picks the sample set for the max norm: ``surface`` uses the vertices of
    the surface elements, ``tet`` the vertices of the active tets.
    """
    if cx.n_elements == 0:
        return 0.0, 0.0, 0.0
    if linf_nodes not in ("surface", "tet"):
        raise ValueError(f"unknown node set {linf_nodes!r}")
    sol, ls = tc.solution, tc.level_set
    l2sq = semi = linf = 0.0
    for s in dg._chunks(cx.n_elements):
        tets, verts = cx.tri_tet[s], cx.tri_vertices[s]
        qpts = map_triangle(_ERR_RULE, verts)
        nk, nq = qpts.shape[:2]
        p = dg.project_points(tc, qpts).reshape(-1, 3)
        diff = _evaluate(cx, tets, coeffs, qpts) - sol.u(p).reshape(nk, nq)
        w = cx.tri_area[s, None] * _ERR_RULE.weights[None, :]
        l2sq += float(np.sum(w * diff ** 2))

        n = cx.tri_normal[s]
        G = np.einsum("kdi,ki->kd", cx.tet_coef[tets][:, 1:, :], coeffs.reshape(-1, 4)[tets])
        gh = G - np.einsum("kd,kd->k", G, n)[:, None] * n
        ge = tangential_gradient(ls, sol, p).reshape(nk, nq, 3)
        ge = ge - np.einsum("kqd,kd->kq", ge, n)[:, :, None] * n[:, None, :]
        gd = gh[:, None, :] - ge
        semi += float(np.sum(w * np.einsum("kqd,kqd->kq", gd, gd)))

        if linf_nodes == "surface":
            vals = _evaluate(cx, tets, coeffs, verts)
            ex = sol.u(dg.project_points(tc, verts).reshape(-1, 3)).reshape(vals.shape)
            linf = max(linf, float(np.abs(vals - ex).max()))
    if linf_nodes == "tet":
        vals = coeffs.reshape(-1, 4)
        for s in dg._chunks(cx.n_active):
            ex = sol.u(dg.project_points(tc, cx.tet_coords[s]).reshape(-1, 3)).reshape(-1, 4)
            linf = max(linf, float(np.abs(vals[s] - ex).max()))
    return math.sqrt(l2sq + semi), math.sqrt(l2sq), linf


def eoc(errors: Sequence[float]) -> list[float]:
    e = np.asarray(errors, dtype=float)
    if np.any(~(e > 0)):
        raise ValueError("EOC needs strictly positive errors")
    return list(np.log2(e[:-1] / e[1:]))


# ---------------------------------------------------------------------------
# studies

def _resolve_case(case) -> TestCase:
    return get_case(case) if isinstance(case, str) else case


def convergence_level(tc: TestCase, level: int, beta_e: float = 50.0, beta_f: float = 50.0,
                      gamma: float = 0.01, mean_factor: float = 0.5, variant: str = "reaction",
                      n0: int = N0, solver: str = "auto", halfwidth: float | None = None):
    """Build, assemble, solve and measure one refinement level."""
    a = tc.bounding_halfwidth if halfwidth is None else halfwidth
    mesh = build_box_mesh((0.0, 0.0, 0.0), a, n0 * 2 ** level)
    t0 = time.perf_counter()
    cx = build_complex(mesh, tc.level_set)
    system = dg.assemble_system(cx, tc, beta_e, beta_f, gamma, mean_factor, variant)
    t1 = time.perf_counter()
    u = dg.solve(system, variant, method=solver)
    t2 = time.perf_counter()
    if variant == "pure":
        # compare against the exact solution shifted to zero discrete mean
        shift = _exact_mean(cx, tc)
        tc = TestCase(tc.name, tc.level_set, _shifted(tc.solution, -shift), tc.bounding_halfwidth)
    h1, l2, linf = error_norms(cx, u, tc)
    info = {"assemble_s": t1 - t0, "solve_s": t2 - t1, "warnings": dict(cx.warnings)}
    rep = ErrorReport(level, mesh.h, system.n_dofs, h1, l2, linf, info=info)
    return rep, cx, system, u


def _exact_mean(cx: CutComplex, tc: TestCase) -> float:
    total = area = 0.0
    for s in dg._chunks(cx.n_elements):
        qpts = map_triangle(_ERR_RULE, cx.tri_vertices[s])
        p = dg.project_points(tc, qpts).reshape(-1, 3)
        w = (cx.tri_area[s, None] * _ERR_RULE.weights[None, :]).reshape(-1)
        total += float(w @ tc.solution.u(p))
        area += float(w.sum())
    return total / area


def _shifted(sol, c: float):
    from .geometry import ManufacturedSolution
    return ManufacturedSolution(lambda x: sol.u(x) + c, sol.grad_u, sol.hess_u)


def run_convergence(case, levels: int, beta_e: float = 50.0, beta_f: float = 50.0,
                    gamma: float = 0.01, mean_factor: float = 0.5, variant: str = "reaction",
                    n0: int = N0, solver: str = "auto") -> list[ErrorReport]:
    """Levels ``0 .. levels-1`` with ``n0 * 2**k`` cells per axis."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    tc = _resolve_case(case)
    reports: list[ErrorReport] = []
    for k in range(levels):
        try:
            rep = convergence_level(tc, k, beta_e, beta_f, gamma, mean_factor, variant,
                                    n0, solver)[0]
        except Exception as exc:
            raise RuntimeError(f"level {k} of case {tc.name}: {exc}") from exc
        if reports:
            prev = reports[-1]
            rep.eoc_h1 = eoc([prev.err_h1, rep.err_h1])[0]
            rep.eoc_l2 = eoc([prev.err_l2, rep.err_l2])[0]
            rep.eoc_linf = eoc([prev.err_linf, rep.err_linf])[0]
        log.info("level %d: h=%.4g ndofs=%d H1=%.3e L2=%.3e Linf=%.3e", k, rep.h, rep.n_dofs,
                 rep.err_h1, rep.err_l2, rep.err_linf)
        reports.append(rep)
    return reports


def condnum_mesh(level: int, n0: int = N0, halfwidth: float = COND_HALFWIDTH):
    """Level mesh of ``[-a, a]^3`` padded by one cell per side on the same lattice."""
    n = n0 * 2 ** level
    h = 2.0 * halfwidth / n
    return build_box_mesh((0.0, 0.0, 0.0), halfwidth + h, n + 2)


def shifted_sphere_complex(level: int, delta: float, n0: int = N0) -> CutComplex:
    mesh = condnum_mesh(level, n0)
    h = 2.0 * COND_HALFWIDTH / (n0 * 2 ** level)
    ls = sphere_levelset(center=(delta * h,) * 3, radius=1.0)
    return build_complex(mesh, ls)


def stiffness_matrix(cx: CutComplex, beta_e: float, beta_f: float, gamma: float,
                     mean_factor: float = 0.5):
    space = dg.build_space(cx)
    blocks = dg.assemble_ah(cx, space, beta_e, mean_factor, as_blocks=True)
    dg.assemble_jh(cx, space, beta_f, gamma, out=blocks)
    return space.to_csr(blocks)


def run_condnum(levels: int, steps: int, beta_e: float = 50.0, beta_f: float = 50.0,
                gamma: float = 0.01, precond: str = "none", mean_factor: float = 0.5,
                method: str = "auto", n0: int = N0, level_list: Sequence[int] | None = None
                ) -> list[CondReport]:
    """Condition numbers of ``a_h + j_h`` for the unit sphere shifted by ``delta (h, h, h)``.

    Levels ``0 .. levels`` (inclusive) and ``delta = l / steps``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    ks = range(levels + 1) if level_list is None else level_list
    reports = []
    for k in ks:
        for l in range(steps + 1):
            delta = l / steps
            try:
                cx = shifted_sphere_complex(k, delta, n0)
                A = stiffness_matrix(cx, beta_e, beta_f, gamma, mean_factor)
                dg.check_kernel(A)
                kappa = condition_number(A, np.ones(A.shape[0]), precond=precond, method=method)
            except Exception as exc:
                raise RuntimeError(f"condition number at level {k}, delta {delta}: {exc}") from exc
            log.info("level %d delta %.4f kappa %.6e", k, delta, kappa)
            reports.append(CondReport(k, delta, kappa, beta_e, beta_f, gamma, precond))
    return reports


def max_kappa(reports: Sequence[CondReport]) -> dict[int, float]:
    out: dict[int, float] = {}
    for r in reports:
        out[r.level] = max(out.get(r.level, 0.0), r.kappa)
    return out


def spread(reports: Sequence[CondReport]) -> dict[int, float]:
    """``max_delta kappa / min_delta kappa`` per level."""
    hi, lo = {}, {}
    for r in reports:
        hi[r.level] = max(hi.get(r.level, 0.0), r.kappa)
        lo[r.level] = min(lo.get(r.level, np.inf), r.kappa)
    return {k: hi[k] / lo[k] for k in hi}


# ---------------------------------------------------------------------------
# output

ERROR_COLUMNS = ["level", "h", "ndofs", "err_h1", "eoc_h1", "err_l2", "eoc_l2",
                 "err_linf", "eoc_linf"]
COND_COLUMNS = ["level", "delta", "kappa"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def format_csv(reports: Sequence, kind: str | None = None) -> str:
    """CSV text; ``kind`` (``errors``/``cond``) is only needed for an empty list."""
    if kind is None:
        kind = "cond" if reports and isinstance(reports[0], CondReport) else "errors"
    if kind == "errors":
        cols = ERROR_COLUMNS
        rows = [[r.level, r.h, r.n_dofs, r.err_h1, r.eoc_h1, r.err_l2, r.eoc_l2,
                 r.err_linf, r.eoc_linf] for r in reports]
    elif kind == "cond":
        cols = COND_COLUMNS
        rows = [[r.level, r.delta, r.kappa] for r in reports]
    else:
        raise ValueError(f"unknown report kind {kind!r}")
    lines = [",".join(cols)] + [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def emit_csv(reports: Sequence, path, kind: str | None = None) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(format_csv(reports, kind))


def emit_plotscript(reports: Sequence, path, csv_path) -> None:
    """Gnuplot script reading ``csv_path``: kappa over delta, or errors over h."""
    is_cond = bool(reports) and isinstance(reports[0], CondReport)
    lines = ["set datafile separator ','", "set key autotitle columnhead", "set logscale y"]
    if is_cond:
        levels = sorted({r.level for r in reports})
        lines += ["set xlabel 'delta'", "set ylabel 'kappa'"]
        plots = [f"'{csv_path}' using 2:($1=={k} ? $3 : 1/0) with lines title 'level {k}'"
                 for k in levels]
    else:
        lines += ["set logscale x", "set xlabel 'h'", "set ylabel 'error'"]
        plots = [f"'{csv_path}' using 2:{c} with linespoints title '{name}'"
                 for c, name in ((4, "H1"), (6, "L2"), (8, "Linf"))]
    lines.append("plot " + ", \\\n     ".join(plots) if plots else "# no data")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
