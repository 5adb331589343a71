"""Compare the compiled and NumPy assembly kernels.

Times the sparse scatter of per-cell Gram contributions into the CSR pattern,
once per available backend, on pre-tabulated cell blocks of the finite-volume
and gradient-recovery discretisations.  The full ``gram_upper`` time (cell
tables plus scatter, default backend) is shown for context.  Both backends
must produce identical matrices.

Usage::

    python benchmarks/bench_kernels.py [--sizes 16 32 64] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hdm import kernels
from hdm.core import _rows, gram_upper
from hdm.fv import build_fv_hd
from hdm.gr import build_gr_hd
from hdm.mesh import gen_diagonal_triangulation, gen_square_grid


def best_time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[16, 32, 64])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)} (default {kernels.BACKEND})")
    header = f"{'scheme':<6} {'n':>5} {'dofs':>7}" + "".join(f" {b + ' [s]':>12}" for b in backends)
    if len(backends) == 2:
        header += f" {'speedup':>8}"
    header += f" {'full [s]':>10}"
    print(header)

    builders = [("fv", lambda n: build_fv_hd(gen_square_grid(n))),
                ("gr", lambda n: build_gr_hd(gen_diagonal_triangulation(n, "centroid")))]
    for name, build in builders:
        for n in args.sizes:
            hd = build(n)
            indptr, indices = hd.gram_pattern()
            blocks = [(np.ascontiguousarray(_rows(blk, "hess")), np.ascontiguousarray(blk.stencil))
                      for blk in hd.blocks(rule="gram")]

            def scatter(b):
                data = np.zeros(len(indices))
                for Rt, stencil in blocks:
                    kernels.scatter_gram(Rt, stencil, indptr, indices, data, which=b)
                return data

            times = [best_time(lambda b=b: scatter(b), args.repeat) for b in backends]
            if len(backends) == 2:
                ref, other = scatter(backends[0]), scatter(backends[1])
                diff = np.abs(ref - other).max()
                if diff > 1e-12 * np.abs(ref).max():
                    raise SystemExit(f"backends disagree on {name} n={n}: {diff:.3e}")
            full = best_time(lambda: gram_upper(hd, ("hess",)), args.repeat)
            row = f"{name:<6} {n:>5} {hd.n_dofs:>7}" + "".join(f" {t:>12.4f}" for t in times)
            if len(times) == 2:
                row += f" {times[1] / times[0]:>7.1f}x"
            print(row + f" {full:>10.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
