"""Compare the compiled kernel backend against the numpy reference.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeat 2000]

Times the four hot kernels on workloads shaped like a real sampling run and
prints per-call latency for each backend plus the speedup.
"""
import argparse
import time

import numpy as np

from dcsolver._kernels import get_backend


def bench(fn, args, repeat):
    fn(*args)  # warm up
    begin = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - begin) / repeat


def workloads():
    rng = np.random.default_rng(0)
    lambdas = np.array([0.0, -0.4, -0.9])
    ts = np.array([0.35, 0.5, 0.8])
    x = rng.standard_normal((64, 8))
    means = rng.standard_normal((5, 8))
    log_weights = np.log(np.full(5, 0.2))
    return [
        ("exp_integrals", "exp_integrals", (0.45, 3)),
        ("exp_integrals_mirror", "exp_integrals_mirror", (0.45, 3)),
        ("integ_weights (3 nodes)", "integ_weights", (lambdas, 0.45, False)),
        ("lagrange_weights (3 nodes)", "lagrange_weights", (ts, 0.42)),
        ("gmm_posterior_mean (64x8, 5 comp)", "gmm_posterior_mean", (x, means, log_weights, 0.7, 0.3)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=2000)
    args = parser.parse_args()

    pure = get_backend("pure")
    try:
        fast = get_backend("fast")
    except ImportError:
        print("compiled backend not built; run pip install -e . first")
        return

    width = max(len(name) for name, _, _ in workloads())
    print(f"{'kernel':<{width}}  {'pure':>10}  {'fast':>10}  speedup")
    for name, attr, call_args in workloads():
        t_pure = bench(getattr(pure, attr), call_args, args.repeat)
        t_fast = bench(getattr(fast, attr), call_args, args.repeat)
        print(f"{name:<{width}}  {t_pure * 1e6:>8.2f}us  {t_fast * 1e6:>8.2f}us  {t_pure / t_fast:>6.2f}x")


if __name__ == "__main__":
    main()
