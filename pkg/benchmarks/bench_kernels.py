"""Time the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py [--n 257] [--repeat 5]``.
The inputs are the mass nodes of a dilated round metric, as used by the
concentration-radius search, plus a disk grid for the log-potential sum.
"""

import argparse
import statistics
import time

import numpy as np

from conflab import SpherePoint, kernels, make_dilated_round
from conflab.concentration import _nodes
from conflab.disk import DiskField, grid_coords, self_cell_log


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def cases(n):
    g = make_dilated_round(SpherePoint(0.48, -0.36, 0.8), 10.0, n)
    nd = _nodes(g)
    x1, x2 = SpherePoint(0.3, 0.1, -0.9).spinor()
    target = 0.2
    m = 65
    f = DiskField.constant(1.0, m)
    X, Y = grid_coords(m)
    w = (f.values * f.weights()).ravel()
    sx, sy = X.ravel(), Y.ravel()
    sv = self_cell_log(f.h)
    return {
        "geodesic_distances": lambda impl: kernels.geodesic_distances(nd.p1, nd.p2, x1, x2, impl=impl),
        "ball_mass": lambda impl: kernels.ball_mass(nd.p1, nd.p2, nd.w, nd.delta, x1, x2, 0.3, impl=impl),
        "rho_bisect": lambda impl: kernels.rho_bisect(nd.p1, nd.p2, nd.w, nd.delta, x1, x2,
                                                      target, 1e-7 * 0.4, impl=impl),
        f"log_potential ({m}x{m})": lambda impl: kernels.log_potential(sx, sy, w, sx, sy, sv,
                                                                      1e-20, impl=impl),
    }, len(nd.w)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=257, help="chart grid size")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    impls = kernels.implementations()
    table, nodes = cases(args.n)
    print(f"mass nodes: {nodes}, backends: {', '.join(sorted(impls))}")
    print(f"{'kernel':28s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speed-up':>9s} {'max diff':>9s}")
    for name, fn in table.items():
        py_best, _ = best_time(lambda: fn(impls["python"]), args.repeat)
        ref = np.asarray(fn(impls["python"]))
        if "compiled" in impls:
            c_best, _ = best_time(lambda: fn(impls["compiled"]), args.repeat)
            diff = float(np.max(np.abs(np.asarray(fn(impls["compiled"])) - ref)))
            print(f"{name:28s} {1e3 * py_best:12.2f} {1e3 * c_best:14.2f} "
                  f"{py_best / c_best:8.1f}x {diff:9.1e}")
        else:
            print(f"{name:28s} {1e3 * py_best:12.2f} {'n/a':>14s}")


if __name__ == "__main__":
    main()
