"""Benchmark the compiled kernels against the pure-Python fallback.

Times the two hot paths — exact integer-Gaussian batch sampling and the
in-place Walsh-Hadamard butterfly — for each available backend and prints a
table with the speedup ratio.  Run from the repository root:

    python3 benchmarks/bench_backends.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from ddgauss import _backend


def _rng(*key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def _best_of(repeats, fn):
    """Best wall-clock time over ``repeats`` runs (seconds)."""
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def bench_sampler(backends, repeats):
    rows = []
    for label, num, den, size in (
        ("s=1/2, 100k draws", 1, 4, 100_000),
        ("s=1,   100k draws", 1, 1, 100_000),
        ("s=12,  100k draws", 144, 1, 100_000),
    ):
        times = {
            name: _best_of(repeats, lambda m=module: m.dgauss_batch(num, den, size, _rng(31)))
            for name, module in backends.items()
        }
        rows.append((f"dgauss_batch {label}", times))
    return rows


def bench_transform(backends, repeats):
    rows = []
    for power in (10, 14, 18):
        x = _rng(32, power).normal(size=1 << power)
        times = {}
        for name, module in backends.items():
            buf = x.copy()
            times[name] = _best_of(repeats, lambda m=module, b=buf: m.fwht_inplace(b))
        rows.append((f"fwht_inplace d=2^{power}", times))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="best-of repeat count")
    args = parser.parse_args()

    backends = _backend.available_backends()
    if "compiled" not in backends:
        print("note: compiled extension not built; timing the pure backend only")

    rows = bench_sampler(backends, args.repeats) + bench_transform(backends, args.repeats)

    names = list(backends)
    header = f"{'kernel':<32}" + "".join(f"{name:>12}" for name in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, times in rows:
        line = f"{label:<32}" + "".join(f"{times[name] * 1e3:>10.2f}ms" for name in names)
        if len(names) == 2:
            line += f"{times['pure'] / times['compiled']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
