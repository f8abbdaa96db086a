"""Time the compiled kernels against their numpy counterparts.

Also compares the eigendecomposition LOOCV path with the general
per-alpha path.  Run with ``python3 benchmarks/bench_kernels.py``.
"""

import argparse
import timeit

import numpy as np

from shrinkcv import kernels
from shrinkcv.estimators import unit_columns
from shrinkcv.tuning import TuningGrid, loocv_cost_gaussian, loocv_cost_gaussian_evd


def _cn(gen, shape):
    return (gen.standard_normal(shape) + 1j * gen.standard_normal(shape)) / np.sqrt(2)


def best(fn, repeat):
    fn()  # compile / warm caches
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_evd(n, l_count, grid_size, repeat):
    gen = np.random.default_rng(n)
    x = _cn(gen, (n, l_count))
    s = np.ones(n, dtype=complex)
    lam, v = np.linalg.eigh(x @ x.conj().T / l_count)
    vs = np.ascontiguousarray(v.conj().T @ s)
    vx = np.ascontiguousarray(v.conj().T @ x)
    alphas = TuningGrid.uniform(grid_size).alphas(l_count)
    eye = np.eye(n)
    return {
        "evd numba": best(lambda: kernels.evd_grid_numba(lam, vs, vx, alphas), repeat),
        "evd numpy": best(lambda: kernels.evd_grid_numpy(lam, vs, vx, alphas), repeat),
        "evd path (dispatched)": best(lambda: loocv_cost_gaussian_evd(x, s, alphas), repeat),
        "general path": best(lambda: [loocv_cost_gaussian(x, s, eye, a) for a in alphas],
                             max(1, repeat // 3)),
    }


def bench_tyler(n, l_count, rho, repeat):
    gen = np.random.default_rng(n + 1)
    y = np.ascontiguousarray(unit_columns(_cn(gen, (n, l_count)) * gen.gamma(0.5, 1.0, l_count)))
    t = np.eye(n, dtype=complex)
    out = {}
    for memory in (0, 1):
        for name, fn in (("numba", kernels.ste_iterate_numba), ("numpy", kernels.ste_iterate_numpy)):
            out[f"tyler {name} m={memory}"] = best(
                lambda fn=fn, m=memory: fn(y, t, rho, t, 1e-6, 100, True, m), repeat)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 32, 64])
    ap.add_argument("--grid", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args(argv)
    for n in args.sizes:
        rows = {**bench_evd(n, n, args.grid, args.repeat),
                **bench_tyler(n, 2 * n, 0.3, args.repeat)}
        print(f"N = {n}")
        for name, sec in rows.items():
            print(f"  {name:24s} {sec * 1e3:9.3f} ms")


if __name__ == "__main__":
    main()
