"""Benchmark the jitted kernels against their pure-numpy fallbacks.

Run: python benchmarks/bench_kernels.py
The DLE_NO_NUMBA=1 environment flag switches the package itself to the
numpy path; this script times both implementations directly.
"""

import time

import numpy as np

from dle._kernels import HAS_NUMBA, lcp_numpy, mc_coverage_numpy
from dle.rng import np_substream


def bench(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    rng = np_substream(0, "bench")
    masses = rng.dirichlet(np.ones(64))
    cum = np.cumsum(masses)
    uniforms = rng.random((100_000, 8)) * cum[-1]

    a = rng.integers(0, 4, size=4096)
    b = a.copy()
    b[2048:] = rng.integers(4, 8, size=2048)

    print(f"numba available: {HAS_NUMBA}")
    rows = []

    t_np = bench(mc_coverage_numpy, masses, cum, uniforms)
    rows.append(("mc_coverage (100k trials, k=8)", "numpy", t_np, 1.0))
    if HAS_NUMBA:
        from dle._kernels import mc_coverage_numba
        mc_coverage_numba(masses, cum, uniforms[:10])  # compile outside timing
        t_nb = bench(mc_coverage_numba, masses, cum, uniforms)
        rows.append(("mc_coverage (100k trials, k=8)", "numba", t_nb, t_np / t_nb))
        ref = mc_coverage_numpy(masses, cum, uniforms)
        assert np.allclose(mc_coverage_numba(masses, cum, uniforms), ref, atol=1e-12)

    t_np = bench(lambda: [lcp_numpy(a, b) for _ in range(1000)])
    rows.append(("lcp_length (len 4096, x1000)", "numpy", t_np, 1.0))
    if HAS_NUMBA:
        from dle._kernels import lcp_numba
        lcp_numba(a, b)
        t_nb = bench(lambda: [lcp_numba(a, b) for _ in range(1000)])
        rows.append(("lcp_length (len 4096, x1000)", "numba", t_nb, t_np / t_nb))
        assert int(lcp_numba(a, b)) == lcp_numpy(a, b)

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  backend  best (s)   speedup vs numpy")
    for name, backend, secs, speedup in rows:
        print(f"{name:<{width}}  {backend:<7}  {secs:8.4f}   {speedup:6.2f}x")


if __name__ == "__main__":
    main()
