"""Quick invariant checks used by ``cutdg selftest`` (a few seconds)."""
from __future__ import annotations

import math

import numpy as np

from . import dg, harness, kernels
from .cutcomplex import build_complex, surface_area
from .geometry import builtin_cases, closest_point, get_case
from .linalg import condition_number, extremal_eigs
from .mesh import build_box_mesh
from .quadrature import segment_rule, triangle_rule


def _quadrature():
    for deg in (1, 2, 4):
        r = triangle_rule(deg)
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                # integral of x^a y^b over the reference triangle
                exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
                got = 0.5 * np.sum(r.weights * r.points[:, 1] ** a * r.points[:, 2] ** b)
                assert abs(got - exact) <= 1e-14, (deg, a, b)
    for deg in (1, 3, 5):
        r = segment_rule(deg)
        for a in range(deg + 1):
            assert abs(np.sum(r.weights * r.points ** a) - 1.0 / (a + 1)) <= 1e-14


def _mesh():
    m = build_box_mesh((0.0, 0.0, 0.0), 0.5, 3)
    assert abs(m.tet_volumes().sum() - 1.0) <= 1e-12
    assert np.all(m.tet_volumes() > 0)


def _projection():
    for tc in builtin_cases():
        rng = np.random.default_rng(1)
        x = rng.uniform(-1.5, 1.5, (200, 3))
        x = x[np.abs(tc.level_set.value(x)) < 0.5 * np.abs(tc.level_set.value(x)).max()]
        p = closest_point(tc.level_set, x)
        q = closest_point(tc.level_set, p)
        assert np.abs(p - q).max() <= 1e-11


def _assembly():
    tc = get_case("sphere")
    cx = build_complex(build_box_mesh((0.0, 0.0, 0.0), 1.6, 5), tc.level_set)
    s = dg.assemble_system(cx, tc)
    A = s.stiffness
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    dg.check_kernel(A)
    assert abs(s.mean_vector.sum() - surface_area(cx)) <= 1e-12
    lmax, lmin = extremal_eigs(A, np.ones(A.shape[0]))
    assert lmin > 0
    u = dg.solve(s)
    h1, l2, linf = harness.error_norms(cx, u, tc)
    assert l2 < 1.0


def _linalg():
    P3 = np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
    assert abs(condition_number(P3, np.ones(3)) - 3.0) <= 1e-12
    lm = extremal_eigs(P3, np.ones(3), method="lanczos")
    assert abs(lm[0] - 3.0) <= 1e-8 and abs(lm[1] - 1.0) <= 1e-8


def _backends():
    if kernels.numba_backend is None:
        return
    rng = np.random.default_rng(0)
    coords = rng.uniform(size=(50, 4, 3))
    vals = rng.normal(size=(50, 4))
    vids = np.tile(np.arange(4), (50, 1))
    pa, na, fa, ea = kernels.numpy_backend.march_tets(vals, coords, vids)
    pb, nb, fb, eb = kernels.numba_backend.march_tets(vals, coords, vids)
    assert np.array_equal(na, nb)
    used = np.arange(2)[None, :] < na[:, None]
    assert np.array_equal(fa[used], fb[used]) and np.array_equal(ea[used], eb[used])
    np.testing.assert_allclose(pa[used], pb[used], rtol=0, atol=1e-14)


CHECKS = [("quadrature exactness", _quadrature), ("mesh volume and orientation", _mesh),
          ("closest-point idempotence", _projection), ("sphere assembly invariants", _assembly),
          ("linear algebra fixtures", _linalg), ("kernel backend parity", _backends)]


def run(verbose: bool = False) -> int:
    failures = 0
    for name, check in CHECKS:
        try:
            check()
            status = "ok"
        except Exception as exc:  # collect every failure
            failures += 1
            status = f"FAIL ({type(exc).__name__}: {exc})"
        if verbose:
            print(f"{name:32s} {status}")
    if verbose:
        print(f"backend {kernels.BACKEND}; {len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return failures
