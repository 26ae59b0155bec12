"""Time the two hot kernels under numba and under the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The first numba call compiles (or loads from cache) and is reported
separately; the table shows the best of ``--repeat`` warm runs.
"""
import argparse
import time

import numpy as np

from netflat import _kernels, families
from netflat.compressed import SpectralModel
from netflat.flat import FlatFunction
from netflat.operator import LaplacianOp
from netflat.propagator import propagate


def taylor_case(side):
    g = families.lattice2d(side)
    L = LaplacianOp(g)
    f = FlatFunction.delta(g, f"{side // 2}_{side // 2}")
    return lambda: propagate(L, f, 2.0, 1e-10)


def series_ray_case(t):
    ray = families.ray_unit()
    L = LaplacianOp(ray)
    f = FlatFunction.from_values(ray, {f"t0:{k}": 1.0 for k in range(5)}, {0: 0.3})
    return lambda: propagate(L, f, t, 1e-10)


def mmatrix_case(n, seed=0):
    rng = np.random.default_rng(seed)
    W = np.where(rng.random((n, n)) < 0.1, rng.uniform(0.1, 2.0, (n, n)), 0.0)
    W = np.triu(W, 1)
    idx = np.arange(n - 1)
    W[idx, idx + 1] += 1.0
    W = W + W.T
    g = np.zeros(n)
    g[0] = 1.0
    return lambda: _kernels.mmatrix_inverse(W, g)


def section_case(depth):
    g = families.spider(3)
    return lambda: SpectralModel(g, (0,), depth)


CASES = [
    ("taylor lattice 20x20, t=2", lambda: taylor_case(20)),
    ("taylor lattice 40x40, t=2", lambda: taylor_case(40)),
    ("taylor ray step, t=20", lambda: series_ray_case(20.0)),
    ("mmatrix inverse n=100", lambda: mmatrix_case(100)),
    ("mmatrix inverse n=300", lambda: mmatrix_case(300)),
    ("spider section depth 64", lambda: section_case(64)),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if _kernels.HAS_NUMBA else [])
    prev = _kernels.get_backend()
    if "numba" in backends:
        _kernels.set_backend("numba")
        t0 = time.perf_counter()
        for _, make in CASES[:1] + CASES[3:4]:
            make()()
        print(f"numba first call (compile or cache load): {time.perf_counter() - t0:.2f} s")
    print(f"{'case':32s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, make in CASES:
        fn = make()
        res = []
        for b in backends:
            _kernels.set_backend(b)
            fn()
            res.append(best_of(fn, args.repeat))
        line = f"{name:32s}" + "".join(f"{r * 1e3:10.2f}ms" for r in res)
        if len(res) == 2:
            line += f"{res[0] / res[1]:11.1f}x"
        print(line)
    _kernels.set_backend(prev)


if __name__ == "__main__":
    main()
