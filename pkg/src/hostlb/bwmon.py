"""Link bandwidth over time and variable-packet-size capacity probing."""

from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

TRACE_HEADER = ("t_sec", "bw_mbps")
DEFAULT_PROBE_SIZES = (100, 300, 500, 700, 900, 1100, 1300, 1500)
DEFAULT_PROBE_REPEATS = 20


class TraceError(ValueError):
    pass


class ParseError(TraceError):
    pass


class OrderError(TraceError):
    pass


class DegenerateFit(ValueError):
    pass


@dataclass(frozen=True)
class BandwidthTrace:
    """Piecewise-constant capacity: ``values[k]`` holds on ``[times[k], times[k+1])``."""

    times: tuple
    values: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(float(v) for v in self.values)
        if not times or len(times) != len(values):
            raise TraceError("trace needs matching, non-empty time and value lists")
        if times[0] != 0.0:
            raise TraceError("first sample must be at t=0")
        for a, b in zip(times, times[1:]):
            if not b > a:
                raise OrderError(f"sample times must strictly increase ({a} then {b})")
        if any(v < 0 for v in values):
            raise TraceError("bandwidth must be non-negative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, mbps: float) -> "BandwidthTrace":
        return cls((0.0,), (mbps,))

    @classmethod
    def from_samples(cls, samples: Iterable[tuple]) -> "BandwidthTrace":
        samples = list(samples)
        return cls(tuple(s[0] for s in samples), tuple(s[1] for s in samples))

    @property
    def samples(self) -> list[tuple]:
        return list(zip(self.times, self.values))

    def bandwidth_at(self, t: float) -> float:
        k = bisect.bisect_right(self.times, t) - 1
        return self.values[max(k, 0)]

    def breakpoints(self, until: Optional[float] = None) -> list[float]:
        """Change instants after t=0 (optionally up to ``until`` inclusive)."""
        return [t for t in self.times[1:] if until is None or t <= until]

    def integrate(self, a: float, b: float) -> float:
        """Exact integral of bandwidth (Mbps * s) over ``[a, b]``."""
        if b <= a:
            return 0.0
        edges = [a] + [t for t in self.times if a < t < b] + [b]
        return sum(self.bandwidth_at(lo) * (hi - lo) for lo, hi in zip(edges, edges[1:]))

    def scaled(self, k: float) -> "BandwidthTrace":
        return BandwidthTrace(self.times, tuple(v * k for v in self.values))


def bandwidth_at(trace: BandwidthTrace, t: float) -> float:
    return trace.bandwidth_at(t)


def load_trace(path) -> BandwidthTrace:
    """Read a ``t_sec,bw_mbps`` CSV."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if rows and tuple(c.strip() for c in rows[0]) == TRACE_HEADER:
        rows = rows[1:]
    times, values = [], []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
        try:
            t, bw = float(row[0]), float(row[1])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
        times.append(t)
        values.append(bw)
    if not times:
        raise ParseError(f"{path}: no samples")
    return BandwidthTrace(tuple(times), tuple(values))


def parse_trace_text(text: str) -> BandwidthTrace:
    """Same format as :func:`load_trace`, from a string (header optional)."""
    times, values = [], []
    for lineno, line in enumerate(text.strip().splitlines(), start=1):
        line = line.strip()
        if not line or line.replace(" ", "") == ",".join(TRACE_HEADER):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"line {lineno}: expected 2 columns")
        try:
            times.append(float(parts[0]))
            values.append(float(parts[1]))
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric value in {line!r}") from None
    if not times:
        raise ParseError("no samples")
    return BandwidthTrace(tuple(times), tuple(values))


def write_trace(trace: BandwidthTrace, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for t, bw in trace.samples:
            writer.writerow([f"{t:g}", f"{bw:g}"])
    return path


# --- VPS probing ---------------------------------------------------------------


@dataclass(frozen=True)
class ProbeSample:
    size: int
    rtt: float


@dataclass(frozen=True)
class LinkModel:
    """Last-hop link seen by a probe: capacity in bit/s, base RTT, uniform jitter bound."""

    capacity_bps: float
    base_delay: float
    jitter_max: float = 0.0


def vps_probe(link: LinkModel, sizes: Sequence[int] = DEFAULT_PROBE_SIZES,
              repeats: int = DEFAULT_PROBE_REPEATS, rng_seed: int = 0) -> list[ProbeSample]:
    """Probe RTTs; request and same-size reply each serialize at ``8*s/C``."""
    if not sizes:
        raise ValueError("need at least one probe size")
    rng = np.random.default_rng(rng_seed)
    samples = []
    for s in sizes:
        noiseless = link.base_delay + 16.0 * s / link.capacity_bps
        jitter = rng.uniform(0.0, link.jitter_max, size=repeats) if link.jitter_max > 0 else np.zeros(repeats)
        samples.extend(ProbeSample(int(s), float(noiseless + j)) for j in jitter)
    return samples


@dataclass(frozen=True)
class CapacityFit:
    intercept: float  # seconds
    slope: float  # seconds per byte
    capacity_mbps: float
    points: tuple  # (size_bytes, min_rtt_s) pairs


def fit_capacity(samples: Iterable[ProbeSample]) -> CapacityFit:
    """Least-squares line through the per-size minimum RTTs."""
    best: dict[int, float] = {}
    for s in samples:
        if s.size not in best or s.rtt < best[s.size]:
            best[s.size] = s.rtt
    if len(best) < 2:
        raise DegenerateFit("need probes of at least two distinct sizes")
    points = tuple(sorted(best.items()))
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    if slope <= 0:
        raise DegenerateFit(f"non-positive slope {slope:.3g}; jitter dominates serialization")
    return CapacityFit(float(intercept), float(slope), 16.0 / slope / 1e6, points)


def estimate_capacity(samples: Iterable[ProbeSample]) -> float:
    return fit_capacity(samples).capacity_mbps


def write_estimate_csv(fit: CapacityFit, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples_path = out_dir / "probe_min_rtt.csv"
    with samples_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["size_bytes", "min_rtt_s"])
        for size, rtt in fit.points:
            writer.writerow([size, f"{rtt:.9f}"])
    fit_path = out_dir / "capacity_fit.csv"
    with fit_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["a_s", "m_s_per_byte", "capacity_mbps"])
        writer.writerow([f"{fit.intercept:.9f}", f"{fit.slope:.6e}", f"{fit.capacity_mbps:.6f}"])
    return [samples_path, fit_path]
