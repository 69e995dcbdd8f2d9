"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--runs N] [--cores C] [--repeat R]

Both paths are called directly, so UVLAB_DISABLE_JIT does not matter here.
The first JIT call (compilation) is timed separately and excluded.
"""
import argparse
import time

import numpy as np

from uvlab import kernels
from uvlab._jit import JIT_AVAILABLE
from uvlab.dut.fault_model import FaultModel


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=1_000_000)
    ap.add_argument("--cores", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    model = FaultModel()
    cores = list(range(args.cores))
    thr = model.thresholds(cores, [2400] * len(cores), "bench")
    c, t, s = kernels.as_kernel_args(cores, thr, model.sigmas())
    keys = kernels.run_keys(0, 0, np.arange(1, args.runs + 1))
    w = np.asarray([4.0, 1.0, 2.0, 8.0, 16.0])
    v, noise = 885.0, float(model.noise_mv)

    def pipeline(flags_fn, obs_fn, sev_fn):
        return lambda: sev_fn(obs_fn(flags_fn(keys, c, t, s, noise, v)), w)

    numpy_path = pipeline(kernels.sample_flags_numpy, kernels.observed_effects_numpy, kernels.run_severities_numpy)
    print(f"{args.runs:,} runs x {args.cores} core(s), best of {args.repeat}")
    t_np = _best(numpy_path, args.repeat)
    print(f"  numpy : {t_np * 1e3:9.1f} ms  ({args.runs / t_np / 1e6:6.2f} M runs/s)")
    if not JIT_AVAILABLE:
        print("  numba : not installed")
        return
    jit_path = pipeline(kernels.sample_flags_jit, kernels.observed_effects_jit, kernels.run_severities_jit)
    t0 = time.perf_counter()
    jit_path()
    print(f"  numba first call (includes compile): {(time.perf_counter() - t0) * 1e3:.0f} ms")
    t_jit = _best(jit_path, args.repeat)
    print(f"  numba : {t_jit * 1e3:9.1f} ms  ({args.runs / t_jit / 1e6:6.2f} M runs/s)")
    print(f"  speed-up: {t_np / t_jit:.1f}x")
    same = np.array_equal(kernels.sample_flags_numpy(keys[:10_000], c, t, s, noise, v),
                          kernels.sample_flags_jit(keys[:10_000], c, t, s, noise, v))
    print(f"  paths agree on the first 10,000 runs: {same}")


if __name__ == "__main__":
    main()
