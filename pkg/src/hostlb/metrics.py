"""Per-second port throughput sampling, download records and CSV reports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .dataplane import HOST_PORT, Switch, external_port

MBPS = 1e6


@dataclass
class ThroughputSample:
    """Throughput over the window ``(t - dt, t]``, all in Mbps.

    ``eth_rx`` is download traffic arriving on each external port,
    ``eth_tx`` upload traffic leaving it; ``aggregated`` is what the switch
    delivers to the host through ``veth0``.
    """

    t: float
    eth_rx: list
    eth_tx: list
    aggregated: float
    optimal: float = 0.0


@dataclass
class DownloadRecord:
    session_id: int
    iface: Optional[int]
    start: float
    end: float
    outcome: str  # "Done" | "Aborted"
    bytes: int


class PortSampler:
    """Differences successive PortStats snapshots."""

    def __init__(self, switch: Switch):
        self.switch = switch
        self.n = switch.n_external
        self._last_t = 0.0
        self._last = self._snapshot()

    def _snapshot(self):
        return {p: self.switch.port_stats(p) for p in self.switch.ports}

    def sample(self, t: float) -> ThroughputSample:
        now = self._snapshot()
        dt = t - self._last_t
        if dt <= 0:
            raise ValueError("sample times must increase")

        def rate(port, attr):
            return (getattr(now[port], attr) - getattr(self._last[port], attr)) * 8 / dt / MBPS

        sample = ThroughputSample(
            t=t,
            eth_rx=[rate(external_port(k), "rx_bytes") for k in range(self.n)],
            eth_tx=[rate(external_port(k), "tx_bytes") for k in range(self.n)],
            aggregated=rate(HOST_PORT, "tx_bytes"),
        )
        self._last, self._last_t = now, t
        return sample


def sample_ports(sampler: PortSampler, t: float) -> ThroughputSample:
    return sampler.sample(t)


@dataclass
class MetricsReport:
    label: str = ""
    n_ifaces: int = 0
    samples: list = field(default_factory=list)
    records: list = field(default_factory=list)
    total_time: float = 0.0
    mean_aggregated: float = 0.0
    mean_optimal: float = 0.0
    completed: int = 0
    aborts: int = 0

    @property
    def optimal(self) -> list[float]:
        return [s.optimal for s in self.samples]

    @property
    def aggregated(self) -> list[float]:
        return [s.aggregated for s in self.samples]

    def link_series(self, k: int) -> list[float]:
        return [s.eth_rx[k] for s in self.samples]

    def mean_aggregated_between(self, t0: float, t1: float) -> float:
        window = [s.aggregated for s in self.samples if t0 < s.t <= t1]
        return sum(window) / len(window) if window else 0.0

    def summary_line(self) -> str:
        return (f"{self.label}: mean_aggregated={self.mean_aggregated:.3f} Mbps "
                f"total_time={self.total_time:.3f} s aborts={self.aborts}")


def aggregate_report(samples: Sequence[ThroughputSample], records: Sequence[DownloadRecord],
                     traces: Sequence, label: str = "") -> MetricsReport:
    """Attach the optimal (sum of link capacities) series and compute totals.

    The optimal value of a sample is the mean capacity over its window, so
    aggregated <= optimal holds sample by sample.
    """
    prev = 0.0
    for s in samples:
        width = s.t - prev
        s.optimal = sum(tr.integrate(prev, s.t) for tr in traces) / width if width > 0 else 0.0
        prev = s.t
    n = len(samples)
    return MetricsReport(
        label=label,
        n_ifaces=len(traces),
        samples=list(samples),
        records=list(records),
        total_time=max((r.end for r in records), default=0.0),
        mean_aggregated=sum(s.aggregated for s in samples) / n if n else 0.0,
        mean_optimal=sum(s.optimal for s in samples) / n if n else 0.0,
        completed=sum(r.outcome == "Done" for r in records),
        aborts=sum(r.outcome == "Aborted" for r in records),
    )


def _f(x: float) -> str:
    return f"{x:.6f}"


def write_csv(report: MetricsReport, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    path = out_dir / "throughput.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_sec"] + [f"eth{k}_mbps" for k in range(report.n_ifaces)]
                   + ["aggregated_mbps", "optimal_mbps"])
        for s in report.samples:
            w.writerow([f"{s.t:g}"] + [_f(x) for x in s.eth_rx] + [_f(s.aggregated), _f(s.optimal)])
    paths.append(path)

    path = out_dir / "downloads.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["session_id", "iface", "start_s", "end_s", "outcome", "bytes"])
        for r in report.records:
            iface = "" if r.iface is None else r.iface
            w.writerow([r.session_id, iface, _f(r.start), _f(r.end), r.outcome, r.bytes])
    paths.append(path)

    path = out_dir / "summary.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "n_ifaces", "completed", "aborted", "total_time_s",
                    "mean_aggregated_mbps", "mean_optimal_mbps"])
        w.writerow([report.label, report.n_ifaces, report.completed, report.aborts,
                    _f(report.total_time), _f(report.mean_aggregated), _f(report.mean_optimal)])
    paths.append(path)
    return paths


def window_count(duration: float) -> int:
    """Number of 1 s samples covering ``[0, duration]``."""
    return max(0, math.ceil(duration - 1e-9))
