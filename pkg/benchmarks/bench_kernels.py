"""Benchmark the numba kernels against the pure-numpy fallback.

Inputs mirror the training hot path: stretching a 450x96 source window and
autocorrelating a 299-sample onset envelope on the 271-lag BPM grid.  Run:

    python benchmarks/bench_kernels.py [--repeat 200]

Setting TEMPOREF_NUMBA=0 would disable the fast path package-wide; here both
implementations are called directly so one process covers the comparison.
"""

import argparse
import time

import numpy as np

from temporef import _kernels
from temporef.augment import PairSamplerConfig, sample_pair
from temporef.dsp import MelSpectrogram


def timeit(fn, repeat):
    fn()  # warm-up (numba compilation, cache touch)
    start = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - start) / repeat


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    window = np.ascontiguousarray(rng.uniform(-14.0, 2.0, size=(450, 96)))
    positions = np.ascontiguousarray(np.arange(300, dtype=np.float64) * 1.5)
    env = np.ascontiguousarray(rng.normal(size=299))
    env -= env.mean()
    lags = np.ascontiguousarray(np.round(6000.0 / np.arange(30, 301)).astype(np.int64))

    rows = []
    numpy_spline = timeit(lambda: _kernels._spline_resample_numpy(window, positions), args.repeat)
    numpy_ac = timeit(lambda: _kernels._lag_autocorr_numpy(env, lags), args.repeat)
    if _kernels.NUMBA_ENABLED:
        numba_spline = timeit(
            lambda: _kernels._spline_resample_numba(window, positions), args.repeat
        )
        numba_ac = timeit(lambda: _kernels._lag_autocorr_numba(env, lags), args.repeat)
        rows.append(("spline resample 450x96 -> 300", numpy_spline, numba_spline))
        rows.append(("lag autocorr 299 @ 271 lags", numpy_ac, numba_ac))
    else:
        rows.append(("spline resample 450x96 -> 300", numpy_spline, None))
        rows.append(("lag autocorr 299 @ 271 lags", numpy_ac, None))
        print("numba unavailable or disabled; timing the numpy path only\n")

    header = f"{'kernel':<34}{'numpy':>12}{'numba':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, slow, fast in rows:
        if fast is None:
            print(f"{name:<34}{slow * 1e3:>10.3f}ms{'-':>12}{'-':>10}")
        else:
            print(f"{name:<34}{slow * 1e3:>10.3f}ms{fast * 1e3:>10.3f}ms{slow / fast:>9.1f}x")

    # end-to-end: one labeled training pair through the active dispatch path
    track = MelSpectrogram(rng.uniform(-14.0, 2.0, size=(1200, 96)).astype(np.float32), 100.0)
    cfg = PairSamplerConfig()
    pair_rng = np.random.default_rng(1)
    per_pair = timeit(lambda: sample_pair(track, cfg, pair_rng), max(20, args.repeat // 4))
    path = "numba" if _kernels.NUMBA_ENABLED else "numpy"
    print(f"\nsample_pair end-to-end ({path} path): {per_pair * 1e3:.2f} ms/pair")


if __name__ == "__main__":
    main()
