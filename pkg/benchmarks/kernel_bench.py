"""Time the numba kernels against their pure-numpy fallbacks.

Run as:  python benchmarks/kernel_bench.py
"""

import time

import numpy as np

from ipfc._kernels import IMPLEMENTATIONS, USING_NUMBA


def bench(fn, args, repeats=5):
    fn(*args)  # warm up (and trigger compilation on the jit path)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    n_modes = 24**4  # the large quasicrystal working size

    vals = rng.standard_normal(n_modes)
    exps = np.array([1, 2, 3], dtype=np.int64)
    cfs = np.array([-2.0, -2.0, 1.0])

    flat = rng.standard_normal(n_modes) + 1j * rng.standard_normal(n_modes)
    neg = (-np.arange(n_modes, dtype=np.int64)) % n_modes

    kvecs = rng.standard_normal((512, 2))
    cre = rng.standard_normal(512)
    cim = rng.standard_normal(512)
    pts = rng.standard_normal((256 * 256, 2))

    cases = [
        ("poly_eval (24^4 values)", "poly_eval", (vals, exps, cfs)),
        ("hermitian_pair_mean (24^4)", "hermitian_pair_mean", (flat, neg)),
        ("bohr_fourier_sum (512 modes x 256^2 px)", "bohr_fourier_sum", (kvecs, cre, cim, pts)),
    ]

    print(f"numba available and active: {USING_NUMBA}")
    header = f"{'kernel':<42} {'numpy':>10} {'numba':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, name, args in cases:
        t_np = bench(IMPLEMENTATIONS["numpy"][name], args)
        if IMPLEMENTATIONS["numba"] is not None:
            t_nb = bench(IMPLEMENTATIONS["numba"][name], args)
            print(f"{label:<42} {t_np*1e3:>8.2f}ms {t_nb*1e3:>8.2f}ms {t_np/t_nb:>7.1f}x")
        else:
            print(f"{label:<42} {t_np*1e3:>8.2f}ms {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
