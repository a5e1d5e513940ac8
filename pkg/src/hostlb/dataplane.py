"""Host-embedded OpenFlow-style software switch.

The switch has one host-facing port (``veth0``) and ``N`` external ports
(``eth0`` .. ``ethN-1``).  Lookup is a single flow table with priority
ordering; select groups pick one bucket per packet from a 5-tuple hash.
"""

from __future__ import annotations

import enum
import functools
import ipaddress
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Optional, Union

HOST_PORT = "veth0"

MATCH_FIELDS = ("eth_type", "ip_proto", "tcp_src_port", "tcp_dst_port", "ip_src", "ip_dst")
REWRITABLE_FIELDS = ("ip_src", "ip_dst", "eth_src", "eth_dst")

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class DataplaneError(Exception):
    pass


class UnknownPort(DataplaneError, KeyError):
    pass


class UnknownGroup(DataplaneError, KeyError):
    pass


class InvalidRule(DataplaneError, ValueError):
    pass


class EthType(enum.Enum):
    IPv4 = 0x0800
    ARP = 0x0806


class IpProto(enum.IntEnum):
    ICMP = 1
    TCP = 6
    UDP = 17


class TcpFlag(enum.Flag):
    NONE = 0
    FIN = 1
    SYN = 2
    RST = 4
    ACK = 16


def external_port(index: int) -> str:
    return f"eth{index}"


@dataclass(frozen=True)
class PacketDescriptor:
    """Abstract header tuple plus payload size.

    For ARP packets ``ip_src``/``ip_dst`` carry the sender and target
    protocol addresses; ``arp_reply`` distinguishes replies from requests.
    """

    eth_src: str = "00:00:00:00:00:00"
    eth_dst: str = "ff:ff:ff:ff:ff:ff"
    eth_type: EthType = EthType.IPv4
    ip_src: str = "0.0.0.0"
    ip_dst: str = "0.0.0.0"
    ip_proto: IpProto = IpProto.TCP
    tcp_src_port: int = 0
    tcp_dst_port: int = 0
    flags: TcpFlag = TcpFlag.NONE
    size: int = 0
    session_id: Optional[int] = None
    arp_reply: bool = False

    @property
    def is_tcp(self) -> bool:
        return self.eth_type is EthType.IPv4 and self.ip_proto is IpProto.TCP

    @property
    def is_syn(self) -> bool:
        return bool(self.flags & TcpFlag.SYN) and not (self.flags & TcpFlag.ACK)

    def field_value(self, name: str):
        # OpenFlow prerequisites: L3/L4 fields are absent unless the lower layers fit.
        if name == "eth_type":
            return self.eth_type
        if self.eth_type is not EthType.IPv4:
            return None
        if name.startswith("tcp_") and self.ip_proto is not IpProto.TCP:
            return None
        return getattr(self, name)


# --- actions -----------------------------------------------------------------


@dataclass(frozen=True)
class SetField:
    field: str
    value: str

    def __post_init__(self):
        if self.field not in REWRITABLE_FIELDS:
            raise InvalidRule(f"field {self.field!r} is not rewritable")


@dataclass(frozen=True)
class Output:
    port: str


@dataclass(frozen=True)
class Group:
    group_id: int


@dataclass(frozen=True)
class Drop:
    pass


@dataclass(frozen=True)
class ToController:
    pass


Action = Union[SetField, Output, Group, Drop, ToController]
_TERMINAL = (Output, Group, Drop, ToController)


def _check_actions(actions: Iterable[Action]) -> tuple:
    actions = tuple(actions)
    terminal = [a for a in actions if isinstance(a, _TERMINAL)]
    if len(terminal) > 1:
        raise InvalidRule("at most one terminal action per action list")
    if terminal and not isinstance(actions[-1], _TERMINAL):
        raise InvalidRule("terminal action must be last")
    return actions


# --- pipeline results --------------------------------------------------------


@dataclass(frozen=True)
class EgressEvent:
    pkt: PacketDescriptor
    port: str


@dataclass(frozen=True)
class ControllerEvent:
    pkt: PacketDescriptor
    in_port: Optional[str]


@dataclass(frozen=True)
class Dropped:
    pkt: PacketDescriptor


PipelineResult = Union[EgressEvent, ControllerEvent, Dropped]


# --- tables ------------------------------------------------------------------


@dataclass
class FlowEntry:
    priority: int
    match: Mapping[str, object]
    actions: tuple
    table_id: int = 0
    packet_count: int = 0
    byte_count: int = 0
    install_time: float = 0.0
    duration: float = 0.0

    def __post_init__(self):
        unknown = set(self.match) - set(MATCH_FIELDS)
        if unknown:
            raise InvalidRule(f"unknown match fields {sorted(unknown)}")
        self.match = dict(self.match)
        self.actions = _check_actions(self.actions)

    @property
    def shape(self) -> tuple:
        return tuple(sorted(self.match))

    @property
    def key(self) -> tuple:
        return (self.priority, tuple(sorted(self.match.items(), key=lambda kv: kv[0])))

    def matches(self, pkt: PacketDescriptor) -> bool:
        return all(pkt.field_value(f) == v for f, v in self.match.items())


@dataclass(frozen=True)
class Bucket:
    weight: int
    actions: tuple

    def __post_init__(self):
        if self.weight < 1:
            raise InvalidRule("bucket weights must be >= 1")
        object.__setattr__(self, "actions", _check_actions(self.actions))


@dataclass
class GroupEntry:
    group_id: int
    buckets: tuple
    group_type: str = "select"

    def __post_init__(self):
        self.buckets = tuple(self.buckets)
        if not self.buckets:
            raise InvalidRule(f"group {self.group_id} has no buckets")
        if self.group_type != "select":
            raise InvalidRule(f"unsupported group type {self.group_type!r}")

    @property
    def weights(self) -> tuple:
        return tuple(b.weight for b in self.buckets)


@dataclass
class PortCounters:
    port_id: str
    tx_bytes: int = 0
    rx_bytes: int = 0
    tx_packets: int = 0
    rx_packets: int = 0
    drops: int = 0
    errors: int = 0


# --- hashing -----------------------------------------------------------------


@functools.lru_cache(maxsize=4096)
def _ip_bytes(addr: str) -> bytes:
    return ipaddress.IPv4Address(addr).packed


def fnv1a_64(data: bytes, h: int = FNV64_OFFSET) -> int:
    for b in data:
        h = ((h ^ b) * FNV64_PRIME) & _MASK64
    return h


def five_tuple_bytes(pkt: PacketDescriptor) -> bytes:
    """Big-endian encoding: ip_src(4) ip_dst(4) proto(1) sport(2) dport(2)."""
    return (
        _ip_bytes(pkt.ip_src)
        + _ip_bytes(pkt.ip_dst)
        + int(pkt.ip_proto).to_bytes(1, "big")
        + pkt.tcp_src_port.to_bytes(2, "big")
        + pkt.tcp_dst_port.to_bytes(2, "big")
    )


def fmix64(h: int) -> int:
    """Murmur3 finalizer; spreads every input bit over the low bits."""
    h ^= h >> 33
    h = (h * 0xFF51AFD7ED558CCD) & _MASK64
    h ^= h >> 33
    h = (h * 0xC4CEB9FE1A85EC53) & _MASK64
    h ^= h >> 33
    return h


def five_tuple_hash(pkt: PacketDescriptor, basis: int = 0) -> int:
    """FNV-1a-64 of the 5-tuple, finalized with :func:`fmix64`.

    Raw FNV-1a has a low bit equal to the XOR of the input bytes' low bits,
    so ``mod 2`` over consecutive source ports would strictly alternate.
    A nonzero ``basis`` is hashed in first as 8 big-endian bytes.
    """
    h = FNV64_OFFSET
    if basis:
        h = fnv1a_64((basis & _MASK64).to_bytes(8, "big"), h)
    return fmix64(fnv1a_64(five_tuple_bytes(pkt), h))


def select_bucket(group: GroupEntry, pkt: PacketDescriptor, basis: int = 0) -> int:
    """Index of the bucket whose cumulative-weight range holds ``hash mod total``."""
    total = sum(group.weights)
    r = five_tuple_hash(pkt, basis) % total
    upper = 0
    for k, w in enumerate(group.weights):
        upper += w
        if r < upper:
            return k
    raise AssertionError("unreachable: r < total")


# --- switch ------------------------------------------------------------------


class Switch:
    """Single-table switch state: flow table, group table, port counters.

    ``now`` is the simulation clock, advanced by whoever drives the switch;
    it is used for flow-entry durations only.
    """

    def __init__(self, n_external: int, hash_basis: int = 0):
        if n_external < 1:
            raise ValueError("switch needs at least one external port")
        self.n_external = n_external
        self.hash_basis = hash_basis
        self.now = 0.0
        self.flow_table: list[FlowEntry] = []
        self.group_table: dict[int, GroupEntry] = {}
        self.ports: dict[str, PortCounters] = {HOST_PORT: PortCounters(HOST_PORT)}
        for i in range(n_external):
            self.ports[external_port(i)] = PortCounters(external_port(i))
        self.dropped_packets = 0
        self.listeners: list[Callable[[EgressEvent, Optional[str]], None]] = []
        self._seq = 0
        self._order: dict[int, int] = {}  # id(entry) -> install sequence
        self._by_key: dict[tuple, FlowEntry] = {}
        # tuple-space index: shape -> {values: [entries]}
        self._index: dict[tuple, dict[tuple, list[FlowEntry]]] = {}

    # -- rule management

    def install_flow(self, entry: FlowEntry) -> None:
        entry.packet_count = 0
        entry.byte_count = 0
        entry.install_time = self.now
        key = entry.key
        old = self._by_key.get(key)
        if old is not None:
            self._unindex(old)
            pos = next(p for p, e in enumerate(self.flow_table) if e is old)
            self.flow_table[pos] = entry
            self._order[id(entry)] = self._order.pop(id(old))
            self._by_key[key] = entry
            self._reindex(entry)
            return
        self._by_key[key] = entry
        self._order[id(entry)] = self._seq
        self._seq += 1
        # stable insert keeps earliest-installed first among equal priorities
        pos = len(self.flow_table)
        while pos > 0 and self.flow_table[pos - 1].priority < entry.priority:
            pos -= 1
        self.flow_table.insert(pos, entry)
        self._reindex(entry)

    def install_group(self, group: GroupEntry) -> None:
        if not group.buckets:
            raise InvalidRule("group has no buckets")
        self.group_table[group.group_id] = group

    def _reindex(self, entry: FlowEntry) -> None:
        shape = entry.shape
        values = tuple(entry.match[f] for f in shape)
        self._index.setdefault(shape, {}).setdefault(values, []).append(entry)

    def _unindex(self, entry: FlowEntry) -> None:
        shape = entry.shape
        values = tuple(entry.match[f] for f in shape)
        bucket = self._index[shape][values]
        bucket[:] = [e for e in bucket if e is not entry]

    # -- lookup

    def lookup(self, pkt: PacketDescriptor) -> Optional[FlowEntry]:
        """Highest-priority matching entry without touching counters."""
        best = None
        best_rank = None
        for shape, table in self._index.items():
            values = tuple(pkt.field_value(f) for f in shape)
            for entry in table.get(values, ()):
                rank = (-entry.priority, self._order[id(entry)])
                if best_rank is None or rank < best_rank:
                    best, best_rank = entry, rank
        return best

    def match_packet(self, pkt: PacketDescriptor) -> Optional[FlowEntry]:
        entry = self.lookup(pkt)
        if entry is not None:
            entry.packet_count += 1
            entry.byte_count += pkt.size
        return entry

    # -- execution

    def port(self, port_id: str) -> PortCounters:
        try:
            return self.ports[port_id]
        except KeyError:
            raise UnknownPort(port_id) from None

    def apply_actions(self, pkt: PacketDescriptor, actions: Iterable[Action],
                      in_port: Optional[str] = None) -> PipelineResult:
        for action in actions:
            if isinstance(action, SetField):
                pkt = replace(pkt, **{action.field: action.value})
            elif isinstance(action, Output):
                counters = self.port(action.port)
                counters.tx_bytes += pkt.size
                counters.tx_packets += 1
                event = EgressEvent(pkt, action.port)
                for listener in self.listeners:
                    listener(event, in_port)
                return event
            elif isinstance(action, Group):
                try:
                    group = self.group_table[action.group_id]
                except KeyError:
                    raise UnknownGroup(action.group_id) from None
                k = select_bucket(group, pkt, self.hash_basis)
                return self.apply_actions(pkt, group.buckets[k].actions, in_port)
            elif isinstance(action, ToController):
                return ControllerEvent(pkt, in_port)
            elif isinstance(action, Drop):
                break
            else:
                raise InvalidRule(f"unknown action {action!r}")
        # explicit Drop or an action list without terminal action
        self.dropped_packets += 1
        return Dropped(pkt)

    def receive(self, pkt: PacketDescriptor, in_port: str) -> PipelineResult:
        """A packet arrives on ``in_port``: count it, look it up, run the actions."""
        counters = self.port(in_port)
        counters.rx_bytes += pkt.size
        counters.rx_packets += 1
        return self.packet_out(pkt, in_port)

    def packet_out(self, pkt: PacketDescriptor, in_port: Optional[str] = None) -> PipelineResult:
        """Run ``pkt`` through the flow table without ingress accounting (table re-injection)."""
        entry = self.match_packet(pkt)
        if entry is None:
            # table-miss default is drop
            self.dropped_packets += 1
            return Dropped(pkt)
        return self.apply_actions(pkt, entry.actions, in_port)

    # -- statistics

    def port_stats(self, port_id: str) -> PortCounters:
        return replace(self.port(port_id))

    def flow_stats(self) -> list[FlowEntry]:
        return [
            replace(e, match=dict(e.match), duration=self.now - e.install_time)
            for e in self.flow_table
        ]


def match_packet(switch: Switch, pkt: PacketDescriptor) -> Optional[FlowEntry]:
    return switch.match_packet(pkt)


def apply_actions(switch: Switch, pkt: PacketDescriptor, actions: Iterable[Action]) -> PipelineResult:
    return switch.apply_actions(pkt, actions)


def install_flow(switch: Switch, entry: FlowEntry) -> None:
    switch.install_flow(entry)


def install_group(switch: Switch, group: GroupEntry) -> None:
    switch.install_group(group)


def port_stats(switch: Switch, port_id: str) -> PortCounters:
    return switch.port_stats(port_id)


def flow_stats(switch: Switch) -> list[FlowEntry]:
    return switch.flow_stats()
