#!/usr/bin/env python3
"""Generate the bundled example WiFi/LTE traces used by preset e5.

These are synthetic stand-ins in the measured-trace format (1 s samples,
``t_sec,bw_mbps``), not field measurements: WiFi is strong for the first
100 s and then suffers drops, some to zero; LTE starts weak and settles near
20 Mbps.  Replace them with real measurements via ``hostlb run --config``.
"""

import argparse
from pathlib import Path

import numpy as np

from hostlb.bwmon import BandwidthTrace, write_trace

DEFAULT_DIR = Path(__file__).resolve().parents[1] / "src" / "hostlb" / "presets" / "traces"


def wifi(rng, n=400):
    bw = np.where(np.arange(n) < 100, rng.normal(30, 2, n), rng.normal(18, 6, n))
    for start, length in ((130, 12), (190, 8), (240, 15), (300, 10), (345, 6)):
        bw[start:start + length] = 0.0
    return np.clip(bw, 0, None).round(1)


def lte(rng, n=400):
    t = np.arange(n)
    bw = np.where(t < 100, rng.normal(6, 1.5, n), rng.normal(20, 2, n))
    return np.clip(bw, 1.0, None).round(1)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=DEFAULT_DIR)
    ap.add_argument("--seed", type=int, default=2018)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    for name, values in (("example_wifi", wifi(rng)), ("example_lte", lte(rng))):
        trace = BandwidthTrace(tuple(float(t) for t in range(len(values))), tuple(values))
        print(write_trace(trace, args.out / f"{name}.csv"))


if __name__ == "__main__":
    main()
