#!/usr/bin/env python3
"""Static-capacity studies: completion time vs interfaces, concurrency and weighting.

Prints compact tables and writes them as CSV under --out.
"""

import argparse
import csv
import statistics
from pathlib import Path

from hostlb.config import ScenarioConfig
from hostlb.netsim import WorkloadConfig, run


def completion(links, mode, seed=42, **wl):
    return run(ScenarioConfig(links, mode, WorkloadConfig(**wl), seed=seed)).total_time


def interfaces_table(seeds):
    rows = []
    t1 = completion([10.0], "RR")
    for n in range(1, 6):
        links = [10.0] * n
        gh = [completion(links, "GroupHash", seed=s) for s in seeds]
        rows.append({"N": n, "ideal_s": t1 / n, "rr_s": completion(links, "RR"),
                     "grouphash_median_s": statistics.median(gh), "grouphash_max_s": max(gh)})
    return rows


def concurrency_table(seeds):
    rows = []
    for c in range(1, 21):
        gh = [completion([10.0, 10.0], "GroupHash", seed=s, concurrency=c) for s in seeds]
        rows.append({"C": c, "rr_s": completion([10.0, 10.0], "RR", concurrency=c),
                     "grouphash_median_s": statistics.median(gh)})
    return rows


def weighted_table(seeds):
    rows = []
    for kb in (1, 10, 20, 50, 100):
        wl = {"file_size": kb * 1000}
        gw = [completion([10.0, 20.0], "GroupWeighted", seed=s, **wl) for s in seeds]
        rows.append({"file_kB": kb, "ideal_s": 100 * kb * 8e3 / 30e6,
                     "wrr_s": completion([10.0, 20.0], "WRR", **wl),
                     "groupweighted_median_s": statistics.median(gw)})
    return rows


def dump(name, rows, out):
    print(f"\n{name}")
    keys = list(rows[0])
    print("  ".join(f"{k:>20}" for k in keys))
    for r in rows:
        print("  ".join(f"{r[k]:>20.3f}" if isinstance(r[k], float) else f"{r[k]:>20}" for k in keys))
    out.mkdir(parents=True, exist_ok=True)
    with (out / f"{name}.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, keys, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20, help="hash seeds per group-mode point")
    ap.add_argument("--out", type=Path, default=Path("hostlb_out/static"))
    args = ap.parse_args()
    seeds = range(42, 42 + args.seeds)
    dump("interfaces", interfaces_table(seeds), args.out)
    dump("concurrency", concurrency_table(seeds), args.out)
    dump("weighted", weighted_table(seeds), args.out)


if __name__ == "__main__":
    main()
