import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from conftest import case_complex
from cutdg import dg, kernels
from cutdg.quadrature import map_segment, map_triangle, segment_rule, triangle_rule

nb = kernels.numba_backend
np_ = kernels.numpy_backend
needs_numba = pytest.mark.skipif(nb is None, reason="numba not installed")


@needs_numba
class TestParity:
    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_march(self, seed):
        rng = np.random.default_rng(seed)
        m = 64
        coords = rng.uniform(size=(m, 4, 3))
        vals = rng.normal(size=(m, 4))
        vids = np.argsort(rng.uniform(size=(m, 4)), axis=1) + 4 * np.arange(m)[:, None]
        pa, na, fa, ea = np_.march_tets(vals, coords, vids)
        pb, nb_, fb, eb = nb.march_tets(vals, coords, vids)
        assert np.array_equal(na, nb_)
        used = np.arange(2)[None, :] < na[:, None]
        assert np.array_equal(fa[used], fb[used]) and np.array_equal(ea[used], eb[used])
        assert_allclose(pa[used], pb[used], rtol=0, atol=1e-14)

    @pytest.mark.parametrize("name", ["sphere", "orthocircle"])
    def test_forms(self, name):
        cx = case_complex(name, 1)
        coef = cx.tet_coef
        tr, sr = triangle_rule(2), segment_rule(3)
        q = map_triangle(tr, cx.tri_vertices)
        for a, b in zip(np_.element_matrices(coef, cx.tri_tet, cx.tri_normal, cx.tri_area, q, tr.weights),
                        nb.element_matrices(coef, cx.tri_tet, cx.tri_normal, cx.tri_area, q, tr.weights)):
            assert_allclose(a, b, rtol=0, atol=1e-13 * np.abs(a).max())
        f = np.cos(q[..., 0])
        la = np_.element_load(coef, cx.tri_tet, cx.tri_area, q, tr.weights, f)
        lb = nb.element_load(coef, cx.tri_tet, cx.tri_area, q, tr.weights, f)
        assert_allclose(la, lb, rtol=0, atol=1e-15)
        pair = cx.tri_tet[cx.edge_elements]
        qe = map_segment(sr, cx.edge_points)
        ea = np_.edge_matrices(coef, pair, cx.edge_conormals, cx.edge_length, qe, sr.weights, 0.5, 78.0)
        eb = nb.edge_matrices(coef, pair, cx.edge_conormals, cx.edge_length, qe, sr.weights, 0.5, 78.0)
        assert_allclose(ea, eb, rtol=0, atol=1e-13 * np.abs(ea).max())
        qf = map_triangle(tr, cx.face_coords)
        fa = np_.face_matrices(coef, cx.face_tets, cx.face_normal, cx.face_area, qf, tr.weights, 488.0, 0.01)
        fb = nb.face_matrices(coef, cx.face_tets, cx.face_normal, cx.face_area, qf, tr.weights, 488.0, 0.01)
        assert_allclose(fa, fb, rtol=0, atol=1e-13 * np.abs(fa).max())

    @given(st.integers(1, 40), st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_scatter(self, n, seed):
        rng = np.random.default_rng(seed)
        index = rng.integers(0, 10, size=(n, 2, 2))
        local = rng.normal(size=(n, 8, 8))
        a, b = np.zeros((10, 4, 4)), np.zeros((10, 4, 4))
        np_.scatter_blocks(a, index, local)
        nb.scatter_blocks(b, index, local)
        # same entity order of accumulation, hence identical sums
        assert np.array_equal(a, b)

    def test_assembled_matrices(self, monkeypatch):
        cx = case_complex("orthocircle", 1)
        fast = dg.assemble_system(cx, None).stiffness
        for name in ("march_tets", "element_matrices", "element_load", "edge_matrices",
                     "face_matrices", "scatter_blocks"):
            monkeypatch.setattr(kernels, name, getattr(np_, name))
        slow = dg.assemble_system(cx, None).stiffness
        assert np.array_equal(fast.indices, slow.indices)
        assert_allclose(fast.data, slow.data, rtol=0, atol=1e-12 * np.abs(fast.data).max())


@pytest.mark.parametrize("env,want", [({"CUTDG_DISABLE_NUMBA": "1"}, "numpy"),
                                      ({"NUMBA_DISABLE_JIT": "1"}, "numpy"),
                                      ({"CUTDG_DISABLE_NUMBA": "0"}, "numba" if nb else "numpy")])
def test_backend_flag(env, want):
    clean = {k: v for k, v in os.environ.items()
             if k not in ("CUTDG_DISABLE_NUMBA", "NUMBA_DISABLE_JIT")}
    out = subprocess.run([sys.executable, "-c", "from cutdg import kernels; print(kernels.BACKEND)"],
                         env={**clean, **env}, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == want
