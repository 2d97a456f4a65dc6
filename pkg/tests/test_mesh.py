import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cutdg.mesh import BOUNDARY, MeshSpec, build_box_mesh, refine, write_mesh_vtk


class TestBuildBoxMesh:
    def test_single_cube(self):
        m = build_box_mesh((0, 0, 0), 0.5, 1)
        assert m.vertices.shape == (8, 3) and m.tets.shape == (6, 4)
        assert m.h == 1.0
        assert_allclose(m.tet_volumes().sum(), 1.0, rtol=1e-14)
        # all six tets share the main diagonal
        diag = {0, 7}
        assert all(diag <= set(t) for t in m.tets.tolist())

    def test_counts(self):
        m = build_box_mesh((0, 0, 0), 0.5, 2)
        assert len(m.vertices) == 27 and len(m.tets) == 48

    @pytest.mark.parametrize("n,a", [(1, 0.5), (3, 1.3), (4, 2.2)])
    def test_volume_and_orientation(self, n, a):
        m = build_box_mesh((0.1, -0.2, 0.3), a, n)
        vol = m.tet_volumes()
        assert vol.min() > 0
        assert abs(vol.sum() - (2 * a) ** 3) <= 1e-12 * (2 * a) ** 3

    def test_tets_congruent(self):
        m = build_box_mesh((0, 0, 0), 1.0, 3)
        x = m.vertices[m.tets]
        lengths = np.sort(np.linalg.norm(x[:, [0, 0, 0, 1, 1, 2]] - x[:, [1, 2, 3, 2, 3, 3]],
                                         axis=2), axis=1)
        assert np.ptp(lengths, axis=0).max() <= 1e-14

    def test_face_topology(self):
        m = build_box_mesh((0, 0, 0), 1.0, 3)
        faces, ft, tf = m.faces, m.face_tets, m.tet_faces
        interior = ft[:, 1] != BOUNDARY
        # 6 n^2 boundary faces per box side pair, 2 triangles each side
        assert (~interior).sum() == 6 * 2 * 3 * 3
        counts = np.bincount(tf.ravel(), minlength=len(faces))
        assert np.array_equal(counts, np.where(interior, 2, 1))
        for f in np.flatnonzero(interior)[:50]:
            for t in ft[f]:
                assert f in tf[t]
        # face vertex triples are sorted and belong to both tets
        assert np.all(np.diff(faces, axis=1) > 0)
        for f in np.flatnonzero(interior)[:50]:
            assert set(faces[f]) <= set(m.tets[ft[f, 0]]) & set(m.tets[ft[f, 1]])

    def test_euler_single_cube(self):
        m = build_box_mesh((0, 0, 0), 0.5, 1)
        edges = {tuple(sorted(e)) for t in m.tets.tolist() for e in itertools.combinations(t, 2)}
        tris = {tuple(sorted(f)) for t in m.tets.tolist() for f in itertools.combinations(t, 3)}
        V, E, F, T = 8, len(edges), len(tris), len(m.tets)
        assert (E, F) == (19, 18)
        assert len(m.faces) == F
        assert V - E + F - T == 1  # a ball

    def test_lazy_connectivity_matches(self):
        m = build_box_mesh((0, 0, 0), 1.0, 4)
        ids = np.array([0, 17, 100, 383])
        assert np.array_equal(m.tet_vertex_ids(ids), m.tets[ids])
        tet_ids, vids = m.cell_tets(np.array([5]))
        assert np.array_equal(vids[0], m.tets[tet_ids[0]])

    def test_bad_count(self):
        with pytest.raises(ValueError):
            build_box_mesh((0, 0, 0), 1.0, 0)


class TestRefine:
    def test_halves_h(self):
        s = MeshSpec((0.0, 0.0, 0.0), 1.6, 5)
        r = refine(s)
        assert r.n == 10 and r.halfwidth == 1.6
        assert s.h == 3.2 / 5 and r.h == 3.2 / 10
        assert r.h == s.h / 2

    def test_one_to_two(self):
        assert refine(MeshSpec((0.0, 0.0, 0.0), 1.0, 1)).n == 2


def test_vtk_dump(tmp_path):
    m = build_box_mesh((0, 0, 0), 0.5, 2)
    path = tmp_path / "mesh.vtk"
    write_mesh_vtk(path, m, np.array([0, 1]))
    text = path.read_text()
    assert text.startswith("# vtk DataFile")
    assert "CELLS 2 10" in text and "CELL_TYPES 2" in text
