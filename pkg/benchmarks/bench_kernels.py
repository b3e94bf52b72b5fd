"""Compiled kernel against the numpy fallback on the batched fixed-point solve.

The workload is the one that dominates integration: one Brascamp-Lieb solve
per integration point, batched. Each case stacks the Jacobian data of a
nonlinear datum at N random points and solves them all from the identity.

    python3 benchmarks/bench_kernels.py [--points 20000] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from bllab import _kernel_py
from bllab.polynomial import NonlinearDatum, Polynomial, PolynomialMap, stacked_jacobian

try:
    from bllab import _kernel
except ImportError:  # extension not built
    _kernel = None


def cases():
    x, y = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    X, Y, Z = (Polynomial.variable(3, i) for i in range(3))
    yield "parabola (R^2, m=2)", NonlinearDatum(
        (PolynomialMap((x,)), PolynomialMap((x + y ** 2,))), (1.0, 1.0))
    yield "curved young triple (R^2, m=3)", NonlinearDatum(
        (PolynomialMap((x,)), PolynomialMap((y,)), PolynomialMap((x - y + 0.3 * x * y,))), (2 / 3,) * 3)
    yield "curved loomis-whitney (R^3, m=3)", NonlinearDatum(
        (PolynomialMap((Y, Z + 0.2 * X ** 2)), PolynomialMap((X, Z)), PolynomialMap((X + 0.1 * Z ** 2, Y))),
        (0.5, 0.5, 0.5))


def run(solve, stack, offsets, p, dims):
    A0 = [np.broadcast_to(np.eye(k), (len(stack), k, k)).copy() for k in dims]
    t0 = time.perf_counter()
    lr, status, iters, _, _ = solve(stack, offsets, p, A0)
    return time.perf_counter() - t0, lr, iters


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"{'case':34s} {'points':>7s} {'numpy s':>9s} {'compiled s':>11s} {'speedup':>8s} {'max |dlog|':>11s}")
    for name, datum in cases():
        pts = rng.uniform(-1, 1, (args.points, datum.n))
        stack = stacked_jacobian(datum, pts)
        offsets = np.concatenate([[0], np.cumsum(datum.dims)]).astype(int)
        p = np.asarray(datum.exponents)
        t_py = min(run(_kernel_py.solve_batch, stack, offsets, p, datum.dims)[0]
                   for _ in range(args.repeat))
        _, lr_py, _ = run(_kernel_py.solve_batch, stack, offsets, p, datum.dims)
        if _kernel is None:
            print(f"{name:34s} {args.points:7d} {t_py:9.3f} {'n/a':>11s}")
            continue
        t_c = min(run(_kernel.solve_batch, stack, offsets, p, datum.dims)[0] for _ in range(args.repeat))
        _, lr_c, _ = run(_kernel.solve_batch, stack, offsets, p, datum.dims)
        fin = np.isfinite(lr_py) & np.isfinite(lr_c)
        dev = float(np.max(np.abs(lr_py[fin] - lr_c[fin]))) if fin.any() else 0.0
        print(f"{name:34s} {args.points:7d} {t_py:9.3f} {t_c:11.3f} {t_py / t_c:8.1f} {dev:11.2e}")


if __name__ == "__main__":
    main()
