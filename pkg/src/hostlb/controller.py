"""Embedded SDN controller: per-session interface selection, NAT rules, proxy ARP."""

from __future__ import annotations

import enum
import logging
import math
import re
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .dataplane import (
    HOST_PORT,
    ControllerEvent,
    EgressEvent,
    EthType,
    FlowEntry,
    Group,
    GroupEntry,
    Bucket,
    IpProto,
    Output,
    PacketDescriptor,
    SetField,
    Switch,
    ToController,
    external_port,
)

log = logging.getLogger(__name__)

SESSION_PRIORITY = 10
GROUP_FLOW_PRIORITY = 10
GROUP_REVERSE_PRIORITY = 20
MISS_PRIORITY = 0
SELECT_GROUP_ID = 1


class ControllerError(Exception):
    pass


class NoInterfacesAvailable(ControllerError):
    pass


class AllLinksDown(NoInterfacesAvailable):
    pass


class UnknownTargetIP(ControllerError):
    pass


class Mode(str, enum.Enum):
    RR = "RR"
    MBW = "MBW"
    WRR = "WRR"
    GROUP_HASH = "GroupHash"
    GROUP_WEIGHTED = "GroupWeighted"
    SINGLE = "Single"

    @property
    def is_group(self) -> bool:
        return self in (Mode.GROUP_HASH, Mode.GROUP_WEIGHTED)


_SINGLE_RE = re.compile(r"^single\(?(\d+)\)?$", re.IGNORECASE)


def parse_mode(text: str) -> tuple[Mode, Optional[int]]:
    """``"WRR"`` -> (WRR, None); ``"Single(1)"`` -> (SINGLE, 1)."""
    m = _SINGLE_RE.match(text.strip())
    if m:
        return Mode.SINGLE, int(m.group(1))
    for mode in Mode:
        if mode is not Mode.SINGLE and mode.value.lower() == text.strip().lower():
            return mode, None
    raise ValueError(f"unknown mode {text!r}")


def mode_label(mode: Mode, single_index: Optional[int] = None) -> str:
    return f"Single({single_index})" if mode is Mode.SINGLE else mode.value


@dataclass(frozen=True)
class InterfaceProfile:
    index: int
    ip: str
    mac: str
    gw_ip: str
    gw_mac: str

    @property
    def port(self) -> str:
        return external_port(self.index)


def default_interfaces(n: int) -> list[InterfaceProfile]:
    return [
        InterfaceProfile(
            index=i,
            ip=f"10.0.{i + 1}.2",
            mac=f"02:00:00:00:{i + 1:02x}:02",
            gw_ip=f"10.0.{i + 1}.1",
            gw_mac=f"02:00:00:00:{i + 1:02x}:01",
        )
        for i in range(n)
    ]


def compute_weights(bw: Sequence[float]) -> dict[int, int]:
    """Percentage share of each link, rounded half-up, floor 1 for live links."""
    total = sum(bw)
    if not bw or total <= 0:
        raise AllLinksDown("all links report zero bandwidth")
    weights = {}
    for j, b in enumerate(bw):
        if b > 0:
            weights[j] = max(1, math.floor(b / total * 100 + 0.5))
    return weights


@dataclass
class Controller:
    """Controller state plus the Packet-In handler.

    ``bandwidth_source(t)`` returns the current bandwidth (Mbps) of every
    external link, in interface order.
    """

    interfaces: list
    mode: Mode = Mode.RR
    single_index: Optional[int] = None
    bandwidth_source: Optional[Callable[[float], Sequence[float]]] = None
    internal_ip: str = "192.168.100.2"
    internal_mac: str = "02:00:00:00:00:02"
    gateway_ip: str = "192.168.100.1"
    gateway_mac: str = "02:00:00:00:00:01"
    flow_counter: int = 0
    weights: dict = field(default_factory=dict)
    epoch_weights: dict = field(default_factory=dict)
    sessions: dict = field(default_factory=dict)  # tcp_src_port -> interface index
    arp_replies: list = field(default_factory=list)

    def __post_init__(self):
        if not self.interfaces:
            raise NoInterfacesAvailable("controller needs at least one interface")
        if self.mode is Mode.SINGLE:
            if self.single_index is None or not 0 <= self.single_index < self.n:
                raise ValueError(f"Single mode needs an index in [0, {self.n})")

    @property
    def n(self) -> int:
        return len(self.interfaces)

    def bandwidths(self, t: float) -> list[float]:
        if self.bandwidth_source is None:
            raise ControllerError(f"mode {self.mode.value} needs a bandwidth source")
        return list(self.bandwidth_source(t))

    # -- selectors

    def select_rr(self) -> int:
        return self.flow_counter % self.n

    def select_mbw(self, t: float) -> int:
        bw = self.bandwidths(t)
        best = max(bw)
        if best <= 0:
            raise NoInterfacesAvailable(f"all links at zero bandwidth at t={t}")
        return bw.index(best)

    def select_wrr(self, t: float) -> int:
        """Consume one unit of weight, refilling the table when it runs dry.

        The chosen key is the one with the largest fraction of its epoch
        weight left, so selections stay interleaved in proportion to the
        weights; ties go to ``flowCounter mod`` over the tied keys.
        """
        if not self.weights:
            self.weights = compute_weights(self.bandwidths(t))
            self.epoch_weights = dict(self.weights)
        left = {k: Fraction(w, self.epoch_weights[k]) for k, w in self.weights.items()}
        best = max(left.values())
        tied = sorted(k for k, f in left.items() if f == best)
        i = tied[self.flow_counter % len(tied)]
        self.weights[i] -= 1
        if self.weights[i] == 0:
            del self.weights[i]
        return i

    def select(self, t: float) -> int:
        if self.mode is Mode.RR:
            return self.select_rr()
        if self.mode is Mode.MBW:
            return self.select_mbw(t)
        if self.mode is Mode.WRR:
            return self.select_wrr(t)
        if self.mode is Mode.SINGLE:
            return self.single_index
        raise ControllerError(f"mode {self.mode.value} makes no per-session choice")

    # -- rules

    def forward_actions(self, i: int) -> tuple:
        iface = self.interfaces[i]
        return (
            SetField("ip_src", iface.ip),
            SetField("eth_src", iface.mac),
            SetField("eth_dst", iface.gw_mac),
            Output(iface.port),
        )

    def reverse_actions(self) -> tuple:
        return (
            SetField("ip_dst", self.internal_ip),
            SetField("eth_dst", self.internal_mac),
            Output(HOST_PORT),
        )

    def build_session_rules(self, pkt: PacketDescriptor, i: int) -> tuple[FlowEntry, FlowEntry]:
        forward = FlowEntry(
            priority=SESSION_PRIORITY,
            match={"eth_type": EthType.IPv4, "ip_proto": IpProto.TCP, "tcp_src_port": pkt.tcp_src_port},
            actions=self.forward_actions(i),
        )
        reverse = FlowEntry(
            priority=SESSION_PRIORITY,
            match={"eth_type": EthType.IPv4, "ip_proto": IpProto.TCP, "tcp_dst_port": pkt.tcp_src_port},
            actions=self.reverse_actions(),
        )
        return forward, reverse

    def install_base_rules(self, switch: Switch) -> None:
        """Table-miss rules sending unmatched TCP and all ARP to the controller."""
        switch.install_flow(FlowEntry(MISS_PRIORITY, {"eth_type": EthType.IPv4, "ip_proto": IpProto.TCP},
                                      (ToController(),)))
        switch.install_flow(FlowEntry(MISS_PRIORITY, {"eth_type": EthType.ARP}, (ToController(),)))

    def setup_group_mode(self, switch: Switch, weights: Optional[Sequence[int]] = None) -> GroupEntry:
        """One-off select-group installation; ``weights=None`` means uniform."""
        if weights is None:
            weights = [1] * self.n
        buckets = [Bucket(w, self.forward_actions(k)) for k, w in enumerate(weights) if w > 0]
        group = GroupEntry(SELECT_GROUP_ID, buckets)
        switch.install_group(group)
        switch.install_flow(FlowEntry(GROUP_FLOW_PRIORITY, {"eth_type": EthType.IPv4, "ip_proto": IpProto.TCP},
                                      (Group(SELECT_GROUP_ID),)))
        for iface in self.interfaces:
            switch.install_flow(FlowEntry(
                GROUP_REVERSE_PRIORITY,
                {"eth_type": EthType.IPv4, "ip_proto": IpProto.TCP, "ip_dst": iface.ip},
                self.reverse_actions(),
            ))
        return group

    def group_weights(self, t: float) -> list[int]:
        table = compute_weights(self.bandwidths(t))
        return [table.get(k, 0) for k in range(self.n)]

    # -- event handlers

    def handle_packet_in(self, switch: Switch, pkt: PacketDescriptor, t: float) -> list[FlowEntry]:
        if pkt.eth_type is EthType.ARP:
            self.handle_arp(switch, pkt)
            return []
        if not pkt.is_tcp or self.mode.is_group:
            return []
        port = pkt.tcp_src_port
        if pkt.is_syn:
            if port in self.sessions:
                # SYN retransmission: same interface, same rules
                i = self.sessions[port]
            else:
                i = self.select(t)
                self.flow_counter += 1
                self.sessions[port] = i
            rules = list(self.build_session_rules(pkt, i))
            for rule in rules:
                switch.install_flow(rule)
            switch.packet_out(pkt)
            return rules
        if port in self.sessions:
            switch.packet_out(pkt)
        else:
            log.warning("dropping non-SYN TCP packet for unknown session (port %d)", port)
        return []

    def handle_arp(self, switch: Switch, request: PacketDescriptor) -> Optional[EgressEvent]:
        """Answer the host's ARP request on behalf of the hidden gateways."""
        if request.arp_reply:
            return None
        target = request.ip_dst
        mac = self.arp_table().get(target)
        if mac is None:
            log.warning("%s", UnknownTargetIP(target))
            return None
        reply = PacketDescriptor(
            eth_src=mac,
            eth_dst=request.eth_src,
            eth_type=EthType.ARP,
            ip_src=target,
            ip_dst=request.ip_src,
            size=request.size,
            arp_reply=True,
        )
        event = switch.apply_actions(reply, (Output(HOST_PORT),))
        self.arp_replies.append(event)
        return event

    def arp_table(self) -> dict[str, str]:
        table = {iface.gw_ip: iface.gw_mac for iface in self.interfaces}
        table[self.gateway_ip] = self.gateway_mac
        return table


def handle_controller_event(ctl: Controller, switch: Switch, event: ControllerEvent, t: float) -> list[FlowEntry]:
    return ctl.handle_packet_in(switch, event.pkt, t)
