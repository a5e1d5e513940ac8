#!/usr/bin/env python3
"""Run every preset through the CLI entry point into one output tree."""

import argparse
import sys
import time
from pathlib import Path

from hostlb.cli import run_experiment
from hostlb.presets import PRESETS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("hostlb_out"))
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    status = 0
    for name in PRESETS:
        t0 = time.perf_counter()
        status |= run_experiment(preset=name, seed=args.seed, out=args.out / name, quiet=True)
        print(f"{name}: {PRESETS[name]} ({time.perf_counter() - t0:.1f} s) -> {args.out / name}")
    return status


if __name__ == "__main__":
    sys.exit(main())
