"""Numba vs pure-numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Both variants are imported directly, so the FIREGAP_PURE_NUMPY flag does not
matter here. Outputs are checked for equality before timing.
"""

import argparse
import time

import numpy as np

from firegap import kernels
from firegap._accel import HAVE_NUMBA


def _time(fn, repeat):
    fn()  # warm-up (JIT compile on the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    xp = rng.standard_normal((8, 16, 66, 66))
    cols = kernels.im2col_numpy(xp, 3, 1)
    burning = rng.random((64, 64)) < 0.1
    susceptible = rng.random((64, 64)) < 0.8
    pmat = rng.random((8, 64, 64)) * 0.3
    u = rng.random((64, 64))
    binary = rng.random((64, 64)) < 0.05
    return {
        "im2col 8x16x64x64 k3": (lambda: kernels.im2col_numpy(xp, 3, 1), lambda: kernels.im2col_numba(xp, 3, 1)),
        "col2im 8x16x64x64 k3": (lambda: kernels.col2im_numpy(cols, xp.shape, 3, 1),
                                 lambda: kernels.col2im_numba(cols, xp.shape, 3, 1)),
        "spread_step 64x64": (lambda: kernels.spread_step_numpy(burning, susceptible, pmat, u),
                              lambda: kernels.spread_step_numba(burning, susceptible, pmat, u)),
        "dilate_disk r=5 64x64": (lambda: kernels.dilate_disk_numpy(binary, 5),
                                  lambda: kernels.dilate_disk_numba(binary, 5)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba unavailable (or FIREGAP_PURE_NUMPY set): numba column times the fallback too")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, (f_np, f_nb) in cases(rng).items():
        if not np.array_equal(f_np(), f_nb()):
            raise SystemExit(f"{name}: numba and numpy disagree")
        t_np = _time(f_np, args.repeat)
        t_nb = _time(f_nb, args.repeat)
        print(f"{name:<24}{1e3 * t_np:>10.2f}{1e3 * t_nb:>10.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
