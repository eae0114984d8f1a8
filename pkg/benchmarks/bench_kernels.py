#!/usr/bin/env python3
"""Time the compiled kernels against the numpy fallback.

Usage:
    python benchmarks/bench_kernels.py                 # 2560x1920, k=8
    python benchmarks/bench_kernels.py --width 640 --height 480 --pool-k 2 --repeat 9
    python benchmarks/bench_kernels.py --csv results.csv
"""

import argparse
import csv
import statistics
import sys
import time

import numpy as np

from hirise import _pykernels

try:
    from hirise import _ckernels
except ImportError:
    _ckernels = None


def timed(fn, repeat):
    runs = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        runs.append(time.perf_counter() - start)
    return statistics.median(runs)


def cases(width, height, k, seed):
    rng = np.random.default_rng(seed)
    data = rng.uniform(0.0, 1.0, size=(height, width, 3))
    weights = 1.0 / rng.lognormal(0.0, 0.05, size=data.shape)
    flat = data.ravel().copy()
    return [
        ("pool_rgb", lambda impl: impl.pool_blocks(data, None, k, False)),
        ("pool_gray", lambda impl: impl.pool_blocks(data, None, k, True)),
        ("pool_gray_mismatch", lambda impl: impl.pool_blocks(data, weights, k, True)),
        ("quantize_8bit", lambda impl: impl.quantize(flat, 1.0, 8)),
    ]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--width", type=int, default=2560)
    parser.add_argument("--height", type=int, default=1920)
    parser.add_argument("--pool-k", type=int, default=8)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv", help="write results here as well")
    args = parser.parse_args(argv)

    if args.width % args.pool_k or args.height % args.pool_k:
        parser.error("--pool-k must divide --width and --height")
    backends = [("python", _pykernels)]
    if _ckernels is None:
        print("compiled kernels not built; timing the fallback only", file=sys.stderr)
    else:
        backends.append(("cython", _ckernels))

    rows = []
    for name, fn in cases(args.width, args.height, args.pool_k, args.seed):
        times = {label: timed(lambda: fn(impl), args.repeat) for label, impl in backends}
        row = {"kernel": name, "size": f"{args.width}x{args.height}", "k": args.pool_k}
        for label, sec in times.items():
            row[f"{label}_ms"] = round(sec * 1e3, 3)
        if "cython" in times:
            row["speedup"] = round(times["python"] / times["cython"], 2)
        rows.append(row)

    header = list(rows[0])
    print(" | ".join(f"{h:>18}" for h in header))
    for row in rows:
        print(" | ".join(f"{str(row[h]):>18}" for h in header))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
