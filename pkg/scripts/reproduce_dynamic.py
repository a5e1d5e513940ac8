#!/usr/bin/env python3
"""Dynamic-capacity runs on the step trace: mode comparison and socket-timeout sweep."""

import argparse
from pathlib import Path

from hostlb.metrics import write_csv
from hostlb.netsim import run
from hostlb.presets import SOCKET_TIMEOUTS, base_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="e4_synthetic", help="base scenario (e4_synthetic or e5_measured)")
    ap.add_argument("--out", type=Path, default=Path("hostlb_out/dynamic"))
    args = ap.parse_args()
    base = base_config(args.preset)

    print(f"{'mode':<10} {'mean Mbps':>10} {'optimal':>8} {'aborts':>7}")
    for mode in ("Single(0)", "Single(1)", "RR", "MBW", "WRR"):
        rep = run(base.with_(mode=mode, label=mode))
        write_csv(rep, args.out / "modes" / mode.lower().replace("(", "").replace(")", ""))
        print(f"{mode:<10} {rep.mean_aggregated:>10.2f} {rep.mean_optimal:>8.2f} {rep.aborts:>7}")

    end = base.duration or 100.0
    print(f"\n{'timeout':>7} {'mean Mbps':>10} {'last 20 s':>10} {'aborts':>7}")
    for s in SOCKET_TIMEOUTS:
        rep = run(base.with_(label=f"timeout {s}").with_workload(socket_timeout=s))
        write_csv(rep, args.out / "timeouts" / f"{s}s")
        tail = rep.mean_aggregated_between(end - 20, end)
        print(f"{s:>7} {rep.mean_aggregated:>10.2f} {tail:>10.2f} {rep.aborts:>7}")


if __name__ == "__main__":
    main()
