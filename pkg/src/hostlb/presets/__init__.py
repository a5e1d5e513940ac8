"""Experiment presets: a base scenario file plus the sweep run over it."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..config import LinkSpec, ScenarioConfig, parse_config

PRESET_DIR = Path(__file__).resolve().parent

FILE_SIZES_KB = (1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
SOCKET_TIMEOUTS = (3, 5, 7, 10, 30)

PRESETS = {
    "e1": "uniform 2x10 Mbps, file-size sweep, Single(0) / RR / GroupHash",
    "e2": "uniform 2x10 Mbps, concurrency sweep C=1..20, RR / GroupHash",
    "e3": "N=1..5 uniform links (RR / GroupHash) and 10+20 Mbps (WRR / GroupWeighted)",
    "e4": "synthetic step trace on eth0, 10 Mbps eth1: Single x2, RR, MBW, WRR",
    "e5": "measured-format traces, WRR with socket timeouts 3/5/7/10/30 s",
}


@dataclass
class PresetRun:
    mode_tag: str
    variant: str
    config: ScenarioConfig

    @property
    def tag(self) -> str:
        return f"{self.mode_tag}/{self.variant}" if self.variant else self.mode_tag


def base_config(name: str) -> ScenarioConfig:
    return parse_config(PRESET_DIR / f"{name}.json")


def _tag(mode: str) -> str:
    return mode.replace("(", "").replace(")", "").lower()


def _size_sweep(base: ScenarioConfig, modes) -> list[PresetRun]:
    return [
        PresetRun(_tag(m), f"size_{kb}kB", base.with_(mode=m, label=f"{m} {kb}kB").with_workload(file_size=kb * 1000))
        for m in modes for kb in FILE_SIZES_KB
    ]


def expand_preset(name: str, seed: Optional[int] = None) -> list[PresetRun]:
    name = name.lower()
    if name == "e1":
        runs = _size_sweep(base_config("e1_uniform"), ("Single(0)", "RR", "GroupHash"))
    elif name == "e2":
        base = base_config("e2_concurrency")
        runs = [
            PresetRun(_tag(m), f"c_{c}", base.with_(mode=m, label=f"{m} C={c}").with_workload(concurrency=c))
            for m in ("RR", "GroupHash") for c in range(1, 21)
        ]
    elif name == "e3":
        base = base_config("e3_interfaces")
        runs = [
            PresetRun(_tag(m), f"n_{n}", base.with_(mode=m, label=f"{m} N={n}", links=[LinkSpec(mbps=10.0)] * n))
            for m in ("RR", "GroupHash") for n in range(1, 6)
        ]
        nonuni = base_config("e3_nonuniform")
        runs += [PresetRun("nonuniform_" + r.mode_tag, r.variant, r.config)
                 for r in _size_sweep(nonuni, ("WRR", "GroupWeighted"))]
    elif name == "e4":
        base = base_config("e4_synthetic")
        runs = [PresetRun(_tag(m), "", base.with_(mode=m, label=m))
                for m in ("Single(0)", "Single(1)", "RR", "MBW", "WRR")]
    elif name == "e5":
        base = base_config("e5_measured")
        runs = [PresetRun("wrr", f"timeout_{s}s", base.with_(label=f"WRR timeout={s}s").with_workload(socket_timeout=s))
                for s in SOCKET_TIMEOUTS]
    else:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    if seed is not None:
        runs = [PresetRun(r.mode_tag, r.variant, r.config.with_(seed=seed)) for r in runs]
    return runs
