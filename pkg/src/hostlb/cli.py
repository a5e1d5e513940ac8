"""``hostlb`` command line: run presets or config files, estimate link capacity."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import bwmon
from .bwmon import DegenerateFit, LinkModel, TraceError
from .config import MissingFile, SchemaError, ScenarioConfig, parse_config
from .controller import ControllerError
from .dataplane import DataplaneError
from .metrics import MetricsReport, write_csv
from .netsim import ConfigError, run
from .presets import PRESETS, PresetRun, expand_preset

DEFAULT_OUT = "hostlb_out"
MODULE_ERRORS = (SchemaError, MissingFile, ConfigError, TraceError, DataplaneError,
                 ControllerError, DegenerateFit, OSError)

log = logging.getLogger("hostlb")


def default_out_dir() -> Path:
    return Path(os.environ.get("HOSTLB_OUT", DEFAULT_OUT))


def emit_outputs(report: MetricsReport, out_dir, quiet: bool = False, mode: str = "") -> list[Path]:
    paths = write_csv(report, out_dir)
    if not quiet:
        print(f"{report.label} [{mode}]: mean_aggregated={report.mean_aggregated:.3f} Mbps "
              f"total_time={report.total_time:.3f} s aborts={report.aborts}")
    return paths


def _write_sweep(rows: list, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "variant", "label", "completed", "aborted", "total_time_s",
                    "mean_aggregated_mbps", "mean_optimal_mbps"])
        w.writerows(rows)


def run_experiment(preset: Optional[str] = None, config: Optional[ScenarioConfig] = None,
                   seed: Optional[int] = None, out: Optional[Path] = None, quiet: bool = False) -> int:
    """Run a preset sweep or a single scenario; returns the process exit code."""
    if (preset is None) == (config is None):
        raise ValueError("give exactly one of preset or config")
    if preset is not None:
        runs = expand_preset(preset, seed)
        root = Path(out) if out is not None else default_out_dir() / preset.lower()
    else:
        if seed is not None:
            config = config.with_(seed=seed)
        runs = [PresetRun(config.label or config.mode, "", config)]
        root = Path(out) if out is not None else Path(config.out_dir) if config.out_dir else default_out_dir()
        root = root / (config.label or "scenario")
    rows = []
    for r in runs:
        report = run(r.config)
        emit_outputs(report, root / r.mode_tag / r.variant if r.variant else root / r.mode_tag,
                     quiet=quiet, mode=r.config.mode)
        rows.append([r.config.mode, r.variant, report.label, report.completed, report.aborts,
                     f"{report.total_time:.6f}", f"{report.mean_aggregated:.6f}", f"{report.mean_optimal:.6f}"])
    _write_sweep(rows, root / "sweep.csv")
    return 0


def estimate(capacity_mbps: float, base_delay_ms: float, jitter_ms: float = 0.0, repeats: int = 20,
             seed: int = 42, out: Optional[Path] = None, quiet: bool = False) -> bwmon.CapacityFit:
    link = LinkModel(capacity_mbps * 1e6, base_delay_ms / 1e3, jitter_ms / 1e3)
    samples = bwmon.vps_probe(link, repeats=repeats, rng_seed=seed)
    fit = bwmon.fit_capacity(samples)
    bwmon.write_estimate_csv(fit, Path(out) if out is not None else default_out_dir() / "estimate")
    if not quiet:
        print(f"estimated capacity {fit.capacity_mbps:.3f} Mbps (configured {capacity_mbps:g} Mbps, "
              f"intercept {fit.intercept * 1e3:.3f} ms)")
    return fit


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hostlb", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a preset or a scenario config")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS), type=str.lower)
    src.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("estimate", help="VPS capacity estimate on a modelled link")
    p.add_argument("--capacity", type=float, required=True, help="link capacity, Mbps")
    p.add_argument("--base-delay-ms", type=float, required=True)
    p.add_argument("--jitter-ms", type=float, default=0.0, help="uniform jitter bound")
    p.add_argument("--repeats", type=int, default=bwmon.DEFAULT_PROBE_REPEATS)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", type=Path)
    p.add_argument("--quiet", action="store_true")

    sub.add_parser("presets", help="list presets")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "presets":
            for name, desc in PRESETS.items():
                print(f"{name}: {desc}")
            return 0
        if args.command == "estimate":
            estimate(args.capacity, args.base_delay_ms, args.jitter_ms, args.repeats,
                     args.seed, args.out, args.quiet)
            return 0
        config = parse_config(args.config) if args.config else None
        return run_experiment(args.preset, config, args.seed, args.out, args.quiet)
    except MODULE_ERRORS as exc:
        print(f"hostlb: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
