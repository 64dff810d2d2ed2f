"""Run every characterisation experiment with one config and seed.

    python scripts/run_experiments.py --config configs/default.yaml --out results/

Each experiment lands in its own subdirectory with a manifest.
"""

import argparse
import sys
from pathlib import Path

from fabsense.cli import main as cli_main

EXPERIMENTS = (
    ["framerate"],
    ["crosstalk", "--mode", "all"],
    ["gain"],
    ["latency"],
    ["grasp", "--feedback", "both"],
    ["scan", "--capture"],
)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path)
    parser.add_argument("--out", type=Path, default=Path("results"))
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    status = 0
    for exp in EXPERIMENTS:
        cmd = exp + ["--out", str(args.out / exp[0]), "--seed", str(args.seed)]
        if args.config is not None:
            cmd += ["--config", str(args.config)]
        rc = cli_main(cmd)
        print(f"{exp[0]:<10} exit {rc}")
        status = status or rc
    return status


if __name__ == "__main__":
    sys.exit(main())
