"""Time the numba kernels against the numpy fallback on a builtin case.

    python3 benchmarks/bench_kernels.py --case orthocircle --level 3 --repeat 5

Both backends are always importable, so one process times both.  The first
numba call (compilation) is excluded by a warm-up run.
"""
import argparse
import time

import numpy as np

from cutdg import kernels
from cutdg.cutcomplex import build_complex, interpolate_levelset
from cutdg.geometry import get_case
from cutdg.mesh import build_box_mesh
from cutdg.quadrature import map_segment, map_triangle, segment_rule, triangle_rule


def best_of(fn, repeat: int) -> float:
    fn()  # warm-up / jit
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads(backend, mesh, nodal, cx):
    tr, sr = triangle_rule(2), segment_rule(3)
    coef = cx.tet_coef
    vids = mesh.tet_vertex_ids(cx.active_tets)
    vals, coords = nodal[vids], mesh.vertex_coords(vids)
    qt = map_triangle(tr, cx.tri_vertices)
    qe = map_segment(sr, cx.edge_points)
    qf = map_triangle(tr, cx.face_coords)
    pair = cx.tri_tet[cx.edge_elements]
    local = np.random.default_rng(0).normal(size=(len(cx.face_tets), 8, 8))
    index = np.stack([cx.face_tets, cx.face_tets[:, ::-1]], axis=-1)
    return {
        "march_tets": lambda: backend.march_tets(vals, coords, vids),
        "element_matrices": lambda: backend.element_matrices(
            coef, cx.tri_tet, cx.tri_normal, cx.tri_area, qt, tr.weights),
        "edge_matrices": lambda: backend.edge_matrices(
            coef, pair, cx.edge_conormals, cx.edge_length, qe, sr.weights, 0.5, 50.0 / cx.h),
        "face_matrices": lambda: backend.face_matrices(
            coef, cx.face_tets, cx.face_normal, cx.face_area, qf, tr.weights, 50.0 / cx.h**2, 0.01),
        "scatter_blocks": lambda: backend.scatter_blocks(
            np.zeros((cx.n_active, 4, 4)), index, local),
    }


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--case", choices=["sphere", "orthocircle"], default="sphere")
    p.add_argument("--level", type=int, default=3)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    tc = get_case(args.case)
    mesh = build_box_mesh((0.0, 0.0, 0.0), tc.bounding_halfwidth, 5 * 2**args.level)
    nodal = interpolate_levelset(mesh, tc.level_set)
    cx = build_complex(mesh, tc.level_set)
    print(f"{args.case} level {args.level}: {cx.n_active} active tets, {cx.n_elements} elements, "
          f"{cx.n_edges} edges, {cx.n_faces} faces")

    backends = {"numpy": kernels.numpy_backend}
    if kernels.numba_backend is not None:
        backends["numba"] = kernels.numba_backend
    rows = {name: {k: best_of(f, args.repeat) for k, f in workloads(b, mesh, nodal, cx).items()}
            for name, b in backends.items()}

    print(f"{'kernel':<18}" + "".join(f"{n:>12}" for n in rows) + ("     speedup" if len(rows) > 1 else ""))
    for k in rows["numpy"]:
        line = f"{k:<18}" + "".join(f"{rows[n][k] * 1e3:>10.2f}ms" for n in rows)
        if "numba" in rows:
            line += f"{rows['numpy'][k] / rows['numba'][k]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
