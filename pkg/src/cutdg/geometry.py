"""Level-set surfaces, closest-point projection and manufactured solutions.

All field callables are vectorized: they take an ``(N, 3)`` array of points
and return ``(N,)`` values, ``(N, 3)`` gradients and ``(N, 3, 3)`` Hessians.
The public operations also accept a single point of shape ``(3,)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Field = Callable[[np.ndarray], np.ndarray]


class DegenerateGeometryError(ValueError):
    """Raised when the level-set gradient vanishes where a normal is needed."""


class ProjectionError(RuntimeError):
    """Closest-point iteration did not converge."""

    def __init__(self, message: str, residual: float, point: np.ndarray | None = None):
        super().__init__(message)
        self.residual = residual
        self.point = point


@dataclass(frozen=True)
class LevelSet:
    value: Field
    gradient: Field
    hessian: Field


@dataclass(frozen=True)
class ManufacturedSolution:
    u: Field
    grad_u: Field
    hess_u: Field


@dataclass(frozen=True)
class TestCase:
    name: str
    level_set: LevelSet
    solution: ManufacturedSolution
    bounding_halfwidth: float

    __test__ = False  # not a pytest class


def _as_points(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


# ---------------------------------------------------------------------------
# Concrete level sets and solutions
# ---------------------------------------------------------------------------

def sphere_levelset(center=(0.0, 0.0, 0.0), radius: float = 1.0) -> LevelSet:
    """``|x - c|^2 - r^2``."""
    c = np.asarray(center, dtype=float)
    r2 = float(radius) ** 2

    def value(x):
        d = x - c
        return np.einsum("ij,ij->i", d, d) - r2

    def gradient(x):
        return 2.0 * (x - c)

    def hessian(x):
        return np.broadcast_to(2.0 * np.eye(3), (x.shape[0], 3, 3)).copy()

    return LevelSet(value, gradient, hessian)


def plane_levelset(normal=(0.0, 0.0, 1.0), offset: float = 0.0) -> LevelSet:
    """``n . x - offset``."""
    n = np.asarray(normal, dtype=float)

    def value(x):
        return x @ n - offset

    def gradient(x):
        return np.broadcast_to(n, x.shape).copy()

    def hessian(x):
        return np.zeros((x.shape[0], 3, 3))

    return LevelSet(value, gradient, hessian)


def orthocircle_levelset() -> LevelSet:
    def value(x):
        x2, y2, z2 = x[:, 0] ** 2, x[:, 1] ** 2, x[:, 2] ** 2
        return ((x2 - 1) ** 2 + (y2 - 1) ** 2 + (z2 - 1) ** 2
                + (x2 + y2 - 4) ** 2 + (x2 + z2 - 4) ** 2 + (y2 + z2 - 4) ** 2 - 16)

    def gradient(x):
        # d/dx_i = 4 x_i (3 x_i^2 + sum_{j != i} x_j^2 - 9)
        s = np.einsum("ij,ij->i", x, x)[:, None]
        return 4.0 * x * (2.0 * x**2 + s - 9.0)

    def hessian(x):
        s = np.einsum("ij,ij->i", x, x)
        out = 8.0 * x[:, :, None] * x[:, None, :]
        diag = 4.0 * (s[:, None] - 9.0) + 32.0 * x**2
        idx = np.arange(3)
        out[:, idx, idx] = diag
        return out

    return LevelSet(value, gradient, hessian)


def sine_product_solution() -> ManufacturedSolution:
    """``sin(pi x/2) sin(pi y/2) sin(pi z/2)``."""
    k = 0.5 * np.pi

    def u(x):
        return np.prod(np.sin(k * x), axis=1)

    def grad_u(x):
        s, c = np.sin(k * x), np.cos(k * x)
        return k * np.stack([c[:, 0] * s[:, 1] * s[:, 2],
                             s[:, 0] * c[:, 1] * s[:, 2],
                             s[:, 0] * s[:, 1] * c[:, 2]], axis=1)

    def hess_u(x):
        s, c = np.sin(k * x), np.cos(k * x)
        h = np.empty((x.shape[0], 3, 3))
        p = np.prod(s, axis=1)
        for i in range(3):
            h[:, i, i] = -p
        h[:, 0, 1] = h[:, 1, 0] = c[:, 0] * c[:, 1] * s[:, 2]
        h[:, 0, 2] = h[:, 2, 0] = c[:, 0] * s[:, 1] * c[:, 2]
        h[:, 1, 2] = h[:, 2, 1] = s[:, 0] * c[:, 1] * c[:, 2]
        return k * k * h

    return ManufacturedSolution(u, grad_u, hess_u)


def bilinear_solution() -> ManufacturedSolution:
    """``xy - 5y + z + xz``."""
    hess = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])

    def u(x):
        return x[:, 0] * x[:, 1] - 5.0 * x[:, 1] + x[:, 2] + x[:, 0] * x[:, 2]

    def grad_u(x):
        return np.stack([x[:, 1] + x[:, 2], x[:, 0] - 5.0, 1.0 + x[:, 0]], axis=1)

    def hess_u(x):
        return np.broadcast_to(hess, (x.shape[0], 3, 3)).copy()

    return ManufacturedSolution(u, grad_u, hess_u)


def polynomial_solution(coeffs: dict[tuple[int, int, int], float]) -> ManufacturedSolution:
    """Polynomial ``sum c * x^a y^b z^c`` keyed by exponent triples.

    Handy for small hand-checkable fixtures (constants, coordinates, ``x*y``).
    """
    terms = [(np.array(e, dtype=int), float(c)) for e, c in coeffs.items()]

    def _mono(x, e):
        return np.prod(x ** e, axis=1)

    def u(x):
        out = np.zeros(x.shape[0])
        for e, c in terms:
            out += c * _mono(x, e)
        return out

    def grad_u(x):
        out = np.zeros_like(x)
        for e, c in terms:
            for i in range(3):
                if e[i] == 0:
                    continue
                d = e.copy()
                d[i] -= 1
                out[:, i] += c * e[i] * _mono(x, d)
        return out

    def hess_u(x):
        out = np.zeros((x.shape[0], 3, 3))
        for e, c in terms:
            for i in range(3):
                for j in range(3):
                    d = e.copy()
                    fac = d[i]
                    d[i] -= 1
                    fac *= d[j]
                    d[j] -= 1
                    if fac == 0:
                        continue
                    out[:, i, j] += c * fac * _mono(x, d)
        return out

    return ManufacturedSolution(u, grad_u, hess_u)


def builtin_cases() -> list[TestCase]:
    return [
        TestCase("sphere", sphere_levelset(), sine_product_solution(), 1.6),
        TestCase("orthocircle", orthocircle_levelset(), bilinear_solution(), 2.2),
    ]


def get_case(name: str) -> TestCase:
    for tc in builtin_cases():
        if tc.name == name:
            return tc
    raise KeyError(f"unknown test case {name!r}; choose from "
                   f"{[tc.name for tc in builtin_cases()]}")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def _unit_gradient(ls: LevelSet, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = ls.gradient(x)
    gn = np.linalg.norm(g, axis=1)
    if np.any(gn <= np.finfo(float).tiny * 1e4):
        bad = x[np.argmin(gn)]
        raise DegenerateGeometryError(f"level-set gradient vanishes at {bad}")
    return g / gn[:, None], gn


def surface_normal(ls: LevelSet, x) -> np.ndarray:
    """Unit normal ``grad(phi)/|grad(phi)|``."""
    pts, single = _as_points(x)
    n, _ = _unit_gradient(ls, pts)
    return n[0] if single else n


def closest_point(ls: LevelSet, x, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Project points onto the zero set of ``ls``.

    Normal (Newton-on-phi) steps bring each point onto the surface, then a
    Newton iteration on the Lagrangian of ``min |p - x|^2 s.t. phi(p) = 0``
    removes the tangential part of ``x - p``.  Points that stall fall back to
    alternating normal/tangential correction steps.
    """
    x0, single = _as_points(x)
    n_pts = x0.shape[0]
    phi0 = np.abs(ls.value(x0))
    p = x0.copy()

    # normal steps until roughly on the surface
    for _ in range(3):
        g = ls.gradient(p)
        g2 = np.einsum("ij,ij->i", g, g)
        if np.any(g2 <= 1e-300):
            raise DegenerateGeometryError(f"level-set gradient vanishes at {p[np.argmin(g2)]}")
        p = p - (ls.value(p) / g2)[:, None] * g

    g = ls.gradient(p)
    lam = np.einsum("ij,ij->i", x0 - p, g) / np.einsum("ij,ij->i", g, g)
    phi_tol = tol * (1.0 + phi0)
    eye = np.eye(3)

    def converged(idx):
        pa, xa = p[idx], x0[idx]
        f = ls.value(pa)
        nrm, _ = _unit_gradient(ls, pa)
        d = xa - pa
        tang = d - np.einsum("ij,ij->i", d, nrm)[:, None] * nrm
        ok = (np.abs(f) <= phi_tol[idx]) & (
            np.linalg.norm(tang, axis=1) <= tol * (1.0 + np.linalg.norm(d, axis=1)))
        return ok, f

    todo = np.arange(n_pts)
    for _ in range(max_iter):
        ok, f = converged(todo)
        todo, f = todo[~ok], f[~ok]
        if todo.size == 0:
            break
        pa, la, xa = p[todo], lam[todo], x0[todo]
        g = ls.gradient(pa)
        H = ls.hessian(pa)

        # Newton on F(p, lam) = [p - x + lam*g; phi]
        J = np.zeros((todo.size, 4, 4))
        J[:, :3, :3] = eye + la[:, None, None] * H
        J[:, :3, 3] = g
        J[:, 3, :3] = g
        rhs = -np.concatenate([pa - xa + la[:, None] * g, f[:, None]], axis=1)
        try:
            step = np.linalg.solve(J, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.full_like(rhs, np.nan)
        newp = pa + step[:, :3]
        newl = la + step[:, 3]

        # fall back to a normal projection plus tangential shift where Newton misbehaves
        bad = ~np.isfinite(step).all(axis=1) | (
            np.linalg.norm(step[:, :3], axis=1) > 0.5 * (1.0 + np.linalg.norm(pa - xa, axis=1)))
        if bad.any():
            gb = g[bad]
            pb = pa[bad] - (f[bad] / np.einsum("ij,ij->i", gb, gb))[:, None] * gb
            nb, _ = _unit_gradient(ls, pb)
            db = xa[bad] - pb
            pb = pb + db - np.einsum("ij,ij->i", db, nb)[:, None] * nb
            gb = ls.gradient(pb)
            newp[bad] = pb
            newl[bad] = np.einsum("ij,ij->i", xa[bad] - pb, gb) / np.einsum("ij,ij->i", gb, gb)
        p[todo] = newp
        lam[todo] = newl
    else:
        ok, f = converged(todo)
        todo, f = todo[~ok], f[~ok]

    if todo.size:
        worst = int(np.argmax(np.abs(f)))
        raise ProjectionError(
            f"closest-point projection did not converge after {max_iter} iterations "
            f"at {x0[todo[worst]]} (|phi(p)| = {abs(f[worst]):.3e})",
            residual=float(np.abs(f[worst])), point=x0[todo[worst]])
    return p[0] if single else p


def extend(field: Field, ls: LevelSet, x, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Pull back a surface field to the narrow band: ``field(p(x))``."""
    pts, single = _as_points(x)
    val = field(closest_point(ls, pts, tol, max_iter))
    return val[0] if single else val


def mean_curvature_trace(ls: LevelSet, x: np.ndarray) -> np.ndarray:
    """``tr(grad n) = (lap(phi) - n.H(phi).n) / |grad(phi)|``."""
    n, gn = _unit_gradient(ls, x)
    H = ls.hessian(x)
    return (np.trace(H, axis1=1, axis2=2) - np.einsum("ni,nij,nj->n", n, H, n)) / gn


def surface_laplacian(ls: LevelSet, sol: ManufacturedSolution, x: np.ndarray) -> np.ndarray:
    """Laplace-Beltrami of the restriction of ``sol.u`` at surface points."""
    n, _ = _unit_gradient(ls, x)
    Hu = sol.hess_u(x)
    lap = np.trace(Hu, axis1=1, axis2=2)
    return (lap - np.einsum("ni,nij,nj->n", n, Hu, n)
            - mean_curvature_trace(ls, x) * np.einsum("ni,ni->n", sol.grad_u(x), n))


def exact_rhs(tc: TestCase, x, variant: str = "reaction") -> np.ndarray:
    """Right-hand side ``-lap_G u + u`` (``reaction``) or ``-lap_G u`` (``pure``)."""
    pts, single = _as_points(x)
    f = -surface_laplacian(tc.level_set, tc.solution, pts)
    if variant == "reaction":
        f = f + tc.solution.u(pts)
    elif variant != "pure":
        raise ValueError(f"unknown variant {variant!r}")
    return f[0] if single else f


def tangential_gradient(ls: LevelSet, sol: ManufacturedSolution, x: np.ndarray) -> np.ndarray:
    """``P_G grad(u)`` at surface points."""
    n, _ = _unit_gradient(ls, x)
    g = sol.grad_u(x)
    return g - np.einsum("ni,ni->n", g, n)[:, None] * n
