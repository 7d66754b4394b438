"""Benchmark the detector hot path: compiled extension vs numpy fallback.

The wrapper runs one full split scan per appended observation, so the scan
kernel dominates experiment runtime. Run:

    python3 benchmarks/bench_detector.py [--length 3000] [--streams 20]
"""
import argparse
import time

import numpy as np

from psrl.detect import available_kernels


def bench_kernel(kernel, streams, grid, stride):
    tic = time.perf_counter()
    hits = 0
    for xs in streams:
        hits += kernel.first_trigger(xs, 0, 0.25, 1e-6, grid, stride, 1, 0.01, 0)
    return time.perf_counter() - tic, hits


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--length", type=int, default=3000)
    parser.add_argument("--streams", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    streams = [
        np.concatenate([
            (rng.random(args.length // 2) < 0.3).astype(float),
            (rng.random(args.length // 2) < 0.35).astype(float),
        ])
        for _ in range(args.streams)
    ]
    kernels = available_kernels()
    print(f"{args.streams} streams of length {args.length}, per-append scans")
    print(f"{'kernel':10s} {'grid':10s} {'seconds':>9s} {'speedup':>8s}")
    for grid_name, grid, stride in [("exhaustive", 0, 1), ("geometric", 1, 1)]:
        base = None
        for name in ("python", "compiled"):
            if name not in kernels:
                continue
            secs, hits = bench_kernel(kernels[name], streams, grid, stride)
            if base is None:
                base = secs
            print(f"{name:10s} {grid_name:10s} {secs:9.3f} {base / secs:7.1f}x"
                  f"   (triggers: {hits and 'yes' or 'none'})")


if __name__ == "__main__":
    main()
