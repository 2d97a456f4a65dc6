"""Fixed quadrature rules on triangles and segments.

Triangle rules are stored in barycentric coordinates, segment rules as the
parameter ``t`` in ``[0, 1]``.  Weights sum to one and are multiplied by the
measure of the physical entity at application time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UnsupportedDegreeError(ValueError):
    pass


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    def __len__(self) -> int:
        return len(self.weights)


def _dunavant4() -> tuple[np.ndarray, np.ndarray]:
    # closed-form 6-point rule, exact for degree 4
    r = np.sqrt(38.0 - 44.0 * np.sqrt(2.0 / 5.0))
    a1 = (8.0 - np.sqrt(10.0) + r) / 18.0
    a2 = (8.0 - np.sqrt(10.0) - r) / 18.0
    s = np.sqrt(213125.0 - 53320.0 * np.sqrt(10.0))
    w1 = (620.0 + s) / 3720.0
    w2 = (620.0 - s) / 3720.0
    pts, wts = [], []
    for a, w in ((a1, w1), (a2, w2)):
        b = 1.0 - 2.0 * a
        pts += [(b, a, a), (a, b, a), (a, a, b)]
        wts += [w, w, w]
    return np.array(pts), np.array(wts)


def triangle_rule(degree: int) -> QuadRule:
    if degree == 1:
        return QuadRule(np.full((1, 3), 1.0 / 3.0), np.ones(1), 1)
    if degree == 2:
        pts = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        return QuadRule(pts, np.full(3, 1.0 / 3.0), 2)
    if degree == 4:
        pts, wts = _dunavant4()
        return QuadRule(pts, wts, 4)
    raise UnsupportedDegreeError(f"no triangle rule of degree {degree}; supported: 1, 2, 4")


def segment_rule(degree: int) -> QuadRule:
    npts = {1: 1, 3: 2, 5: 3}.get(degree)
    if npts is None:
        raise UnsupportedDegreeError(f"no segment rule of degree {degree}; supported: 1, 3, 5")
    x, w = np.polynomial.legendre.leggauss(npts)
    return QuadRule(0.5 * (x + 1.0), 0.5 * w, degree)


def map_triangle(rule: QuadRule, verts: np.ndarray) -> np.ndarray:
    """Physical points ``(n, q, 3)`` of ``rule`` on triangles ``verts`` ``(n, 3, 3)``."""
    return np.einsum("qa,nad->nqd", rule.points, verts)


def map_segment(rule: QuadRule, ends: np.ndarray) -> np.ndarray:
    """Physical points ``(n, q, 3)`` on segments ``ends`` ``(n, 2, 3)``."""
    t = rule.points
    return ends[:, None, 0, :] * (1.0 - t)[None, :, None] + ends[:, None, 1, :] * t[None, :, None]
