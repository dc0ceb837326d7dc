"""Compare the numba and numpy implementations of the per-trajectory kernels.

    python3 benchmarks/bench_kernels.py [--rows 200000] [--mu 2] [--repeat 5]

Run once with ``GEODESIC_COMPASS_NUMBA=0`` as well to time a whole
:func:`estimate` call on the fallback path (the ``estimate`` line uses
whichever backend was selected at import).
"""
import argparse
import time

import numpy as np

from geodesic_compass import kernels
from geodesic_compass.params import ModelParams
from geodesic_compass.sampler import SeedSpec, estimate, sample_batch


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=200_000)
    ap.add_argument("--mu", type=float, default=2.0, help="expected events per trajectory")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    p = ModelParams(args.mu, 0.5, 1.0)
    batch = sample_batch(p, args.rows, SeedSpec(0).generator(0))
    legs, counts = batch.legs, batch.counts
    print(f"backend at import: {kernels.BACKEND}; batch {legs.shape[0]} x {legs.shape[1]}")
    print(f"{'kernel':<18}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}{'max diff':>12}")
    for name in ("row_log_cosh_sum", "row_log_sinh_sum", "row_cos_product"):
        f_np = getattr(kernels, name + "_numpy")
        f_nb = getattr(kernels, name + "_numba")
        f_nb(legs[:2], counts[:2], 0.5)  # compile outside the timing
        t_np = best_of(lambda: f_np(legs, counts, 0.5), args.repeat)
        t_nb = best_of(lambda: f_nb(legs, counts, 0.5), args.repeat)
        a, b = f_np(legs, counts, 0.5), f_nb(legs, counts, 0.5)
        finite = np.isfinite(a)
        diff = float(np.max(np.abs(a[finite] - b[finite]))) if finite.any() else 0.0
        print(f"{name:<18}{1e3 * t_np:12.2f}{1e3 * t_nb:12.2f}{t_np / t_nb:10.1f}{diff:12.1e}")

    estimate("cosh", p, replications=1000, seed=1)  # warm-up
    t_est = best_of(lambda: estimate("cosh", p, replications=args.rows, seed=1), args.repeat)
    print(f"estimate(cosh, R={args.rows}) with {kernels.BACKEND} kernels: {1e3 * t_est:.1f} ms")


if __name__ == "__main__":
    main()
