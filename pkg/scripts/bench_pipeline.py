"""Time the Hampel stage on a full eight-sensor bus, single-threaded."""

import argparse
import time

import numpy as np

from fabsense.frame import Frame
from fabsense.pipeline import HampelConfig, HampelFilter


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seconds", type=float, default=10.0)
    parser.add_argument("--sensors", type=int, default=8)
    parser.add_argument("--window", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    filt = HampelFilter(range(args.sensors), HampelConfig(window=args.window))
    pool = [[Frame(s, rng.integers(0, 4096, 1024)) for s in range(args.sensors)] for _ in range(16)]
    n = 0
    start = time.perf_counter()
    while (elapsed := time.perf_counter() - start) < args.seconds:
        for f in pool[n % len(pool)]:
            filt.filter_frame(f)
        n += 1
    print(f"{n / elapsed:.1f} bus frames/s ({args.sensors} x 1024 taxels, window {args.window}) over {elapsed:.1f} s")


if __name__ == "__main__":
    main()
