"""Compare the compiled and pure-Python kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--resolutions 8 12 16] [--repeat 5]

Reports the best-of-``repeat`` wall time per call for each kernel and the
speedup of the compiled backend, and checks both return the same values.
"""

import argparse
import timeit

import numpy as np

from volball import _backend
from volball.mesh import generate_mesh


def _queries(n, seed=0):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(n, 3))
    p *= (0.95 * rng.random(n) ** (1 / 3) / np.linalg.norm(p, axis=1))[:, None]
    return p[np.lexsort(p.T)]  # spatially coherent order, as in registration


def bench(resolution, repeat, n_queries):
    mesh = generate_mesh("blob", resolution, seed=1)
    image = np.ascontiguousarray(mesh.vertices)
    pts = _queries(n_queries)
    rows = []
    results = {}
    for name in _backend.available():
        k = _backend.load(name)
        calls = {
            "edge_weights": lambda: k.edge_weights(image, mesh.tets, mesh.volumes),
            "walk_locate": lambda: k.walk_locate(image, mesh.tets, mesh.neighbors, pts, 0, 1e-12, 10_000),
        }
        for kernel, fn in calls.items():
            t = min(timeit.repeat(fn, number=1, repeat=repeat))
            results[(name, kernel)] = fn()
            rows.append((kernel, name, t))
    if len(_backend.available()) == 2:
        w_c, w_p = results[("cython", "edge_weights")], results[("python", "edge_weights")]
        assert np.allclose(w_c, w_p, rtol=1e-12, atol=1e-15), "edge_weights differ"
        l_c, l_p = results[("cython", "walk_locate")], results[("python", "walk_locate")]
        assert np.array_equal(l_c[0], l_p[0]), "walk_locate tets differ"
    return mesh, rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolutions", type=int, nargs="+", default=[8, 12, 16])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--queries", type=int, default=2000)
    args = ap.parse_args(argv)
    print(f"backends available: {', '.join(_backend.available())}")
    print(f"{'tets':>7} {'kernel':<13} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8}")
    for r in args.resolutions:
        mesh, rows = bench(r, args.repeat, args.queries)
        by = {(kern, name): t for kern, name, t in rows}
        for kern in ("edge_weights", "walk_locate"):
            tp = by.get((kern, "python"))
            tc = by.get((kern, "cython"))
            sp = f"{tp / tc:8.1f}" if tp and tc else "     n/a"
            fmt = lambda t: f"{1e3 * t:12.2f}" if t is not None else f"{'n/a':>12}"
            print(f"{mesh.n_tets:>7} {kern:<13} {fmt(tp)} {fmt(tc)} {sp}")


if __name__ == "__main__":
    main()
