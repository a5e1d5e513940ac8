"""Scenario configuration: dataclasses plus JSON loading and validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import jsonschema

from .bwmon import BandwidthTrace, load_trace
from .controller import InterfaceProfile, Mode, parse_mode
from .netsim import WorkloadConfig

DEFAULT_SEED = 42


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


class MissingFile(FileNotFoundError):
    pass


@dataclass
class LinkSpec:
    """Capacity of one last-hop link: fixed Mbps, a trace file, or inline samples."""

    mbps: Optional[float] = None
    trace: Optional[str] = None
    samples: Optional[list] = None

    def resolve(self, base_dir: Optional[Path] = None) -> BandwidthTrace:
        if self.mbps is not None:
            return BandwidthTrace.constant(self.mbps)
        if self.samples is not None:
            return BandwidthTrace.from_samples(self.samples)
        path = Path(self.trace)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.exists():
            raise MissingFile(f"trace file not found: {path}")
        return load_trace(path)


@dataclass
class ScenarioConfig:
    links: list
    mode: str = "RR"
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    duration: Optional[float] = None
    seed: int = DEFAULT_SEED
    out_dir: Optional[str] = None
    interfaces: Optional[list] = None
    label: str = ""
    base_dir: Optional[Path] = None

    def __post_init__(self):
        self.links = [l if isinstance(l, LinkSpec) else _coerce_link(l) for l in self.links]
        if not self.links:
            raise SchemaError("links", "at least one link is required")
        mode, index = self.mode_spec()
        if mode is Mode.SINGLE and index >= len(self.links):
            raise SchemaError("mode", f"Single({index}) needs index < {len(self.links)}")

    @property
    def n(self) -> int:
        return len(self.links)

    def mode_spec(self) -> tuple[Mode, Optional[int]]:
        try:
            return parse_mode(self.mode)
        except ValueError as exc:
            raise SchemaError("mode", str(exc)) from None

    def resolved_traces(self) -> list[BandwidthTrace]:
        return [l.resolve(self.base_dir) for l in self.links]

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def with_workload(self, **changes) -> "ScenarioConfig":
        return replace(self, workload=replace(self.workload, **changes))


def _coerce_link(value) -> LinkSpec:
    if isinstance(value, (int, float)):
        return LinkSpec(mbps=float(value))
    if isinstance(value, BandwidthTrace):
        return LinkSpec(samples=value.samples)
    if isinstance(value, (str, Path)):
        return LinkSpec(trace=str(value))
    raise SchemaError("links", f"cannot interpret link {value!r}")


_MODE_PATTERN = r"^(RR|MBW|WRR|GroupHash|GroupWeighted|Single\(?[0-9]+\)?)$"

SCHEMA = {
    "type": "object",
    "required": ["links", "mode"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "topology": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "N": {"type": "integer", "minimum": 1},
                "interfaces": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["ip", "mac", "gw_ip", "gw_mac"],
                        "additionalProperties": False,
                        "properties": {k: {"type": "string"} for k in ("ip", "mac", "gw_ip", "gw_mac")},
                    },
                },
            },
        },
        "links": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "mbps": {"type": "number", "minimum": 0},
                    "trace": {"type": "string"},
                },
                "oneOf": [{"required": ["mbps"]}, {"required": ["trace"]}],
            },
        },
        "mode": {"type": "string", "pattern": _MODE_PATTERN},
        "workload": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "total_requests": {"type": "integer", "minimum": 0},
                "file_size": {"type": "integer", "minimum": 1},
                "concurrency": {"type": "integer", "minimum": 1},
                "socket_timeout": {"type": "number", "exclusiveMinimum": 0},
                "per_request_overhead": {"type": "number", "minimum": 0},
                "stall_rate_mbps": {"type": "number", "minimum": 0},
            },
        },
        "duration": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "out_dir": {"type": "string"},
    },
}


def _json_path(error: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in error.absolute_path)


def config_from_dict(doc: dict, base_dir: Optional[Path] = None) -> ScenarioConfig:
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise SchemaError(_json_path(errors[0]), errors[0].message)

    topo = doc.get("topology", {})
    links = [LinkSpec(mbps=l.get("mbps"), trace=l.get("trace")) for l in doc["links"]]
    n = topo.get("N", len(links))
    if n != len(links):
        raise SchemaError("topology.N", f"N={n} but {len(links)} links are configured")
    interfaces = None
    if "interfaces" in topo:
        if len(topo["interfaces"]) != n:
            raise SchemaError("topology.interfaces", f"expected {n} interface profiles")
        interfaces = [InterfaceProfile(index=k, **p) for k, p in enumerate(topo["interfaces"])]
        for attr in ("ip", "mac"):
            values = [getattr(p, attr) for p in interfaces]
            if len(set(values)) != len(values):
                raise SchemaError(f"topology.interfaces", f"duplicate interface {attr}")

    cfg = ScenarioConfig(
        links=links,
        mode=doc["mode"],
        workload=WorkloadConfig(**doc.get("workload", {})),
        duration=doc.get("duration"),
        seed=doc.get("seed", DEFAULT_SEED),
        out_dir=doc.get("out_dir"),
        interfaces=interfaces,
        label=doc.get("name", ""),
        base_dir=base_dir,
    )
    for k, link in enumerate(cfg.links):
        if link.trace is not None:
            path = Path(link.trace)
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            if not path.exists():
                raise MissingFile(f"links.{k}.trace: file not found: {path}")
    return cfg


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"invalid JSON: {exc}") from None
    return config_from_dict(doc, base_dir=path.parent)
