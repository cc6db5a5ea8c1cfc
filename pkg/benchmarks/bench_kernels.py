"""Benchmark the compiled kernels against the pure-NumPy fallback.

Micro-benchmarks time each batch kernel on both backends in-process;
the end-to-end section times a full verification run per backend in a
subprocess (the backend is chosen at import via CONVEXMC_BACKEND).

Usage: python benchmarks/bench_kernels.py [--quick] [--skip-e2e]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from convexmc._kernels import pykernels

try:
    from convexmc._kernels import cykernels
except ImportError:
    cykernels = None


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(n):
    rng = np.random.default_rng(0)
    keys = pykernels.stream_keys(1, 0, n)
    ctrs = np.zeros(n, dtype=np.uint64)
    mats = rng.normal(size=(n, 6, 3))
    pts = rng.normal(size=(n, 3, 6))
    U, _ = pykernels.orthonormalize_batch(rng.normal(size=(n, 3, 2)))
    e = 0.2 * rng.normal(size=(n, 3))
    M = np.diag([1.0, 0.25, 1.0 / 9.0])
    a2 = np.tile(np.vstack([np.eye(2), -np.eye(2)])[None], (n, 1, 1))
    c2 = np.ones((n, 4))
    t0 = np.zeros((n, 2))
    rad = 2.0 * np.ones(n)

    cases = [
        ("uniform_block(16)", lambda impl: impl.uniform_block(keys, ctrs, 16)),
        ("normal_block(16)", lambda impl: impl.normal_block(keys, ctrs, 16)),
        ("orthonormalize (6,3)", lambda impl: impl.orthonormalize_batch(mats)),
        ("gram_volume (3,6)", lambda impl: impl.gram_volume_batch(pts)),
        ("quadric_section d=3 k=2", lambda impl: impl.quadric_section_batch(U, e, M, np.pi)),
        ("polygon_section m=4", lambda impl: impl.polygon_section_batch(a2, c2, t0, rad)),
    ]
    print(f"\nkernel micro-benchmarks, batch size {n}")
    header = f"{'kernel':28s} {'numpy':>10s} {'cython':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for name, call in cases:
        t_py = timeit(lambda: call(pykernels))
        if cykernels is not None:
            t_cy = timeit(lambda: call(cykernels))
            print(f"{name:28s} {t_py*1e3:9.2f}ms {t_cy*1e3:9.2f}ms {t_py/t_cy:7.1f}x")
        else:
            print(f"{name:28s} {t_py*1e3:9.2f}ms {'n/a':>10s} {'':>8s}")


E2E = [
    sys.executable, "-m", "convexmc.cli", "verify", "--theorem", "thm2",
    "--body", "box:half=1", "--d", "3", "--k", "2", "--p", "1",
    "--n", "100000", "--seed", "7",
]


def bench_end_to_end():
    print("\nend-to-end: verify thm2 box d=3 k=2 p=1 n=1e5")
    for backend in ("python", "cython") if cykernels is not None else ("python",):
        env = dict(os.environ, CONVEXMC_BACKEND=backend)
        t0 = time.perf_counter()
        res = subprocess.run(E2E, env=env, capture_output=True, text=True)
        dt = time.perf_counter() - t0
        status = "ok" if res.returncode == 0 else f"exit {res.returncode}"
        print(f"  {backend:8s} {dt:6.1f}s  ({status})")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller batches")
    parser.add_argument("--skip-e2e", action="store_true")
    args = parser.parse_args()
    if cykernels is None:
        print("compiled backend not built; showing numpy fallback only")
    bench_kernels(20_000 if args.quick else 200_000)
    if not args.skip_e2e:
        bench_end_to_end()


if __name__ == "__main__":
    main()
