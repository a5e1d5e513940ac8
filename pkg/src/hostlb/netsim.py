"""Fluid flow-level discrete-event simulation of the multi-homed host.

Topology: host stack -> veth0 -> switch -> eth_i -> GW_i -> router -> server.
Only the last-hop links constrain throughput; each link's capacity is split
equally among the downloads it carries.  Control packets (SYN, GET, FIN)
and the downloaded bytes go through the switch pipeline, so port counters
and egress choices come from the installed rules, not from shortcuts.
"""

from __future__ import annotations

import enum
import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .bwmon import BandwidthTrace
from .controller import Controller, Mode, NoInterfacesAvailable, default_interfaces, mode_label
from .dataplane import (
    HOST_PORT,
    ControllerEvent,
    EgressEvent,
    EthType,
    PacketDescriptor,
    Switch,
    TcpFlag,
    external_port,
)
from .metrics import DownloadRecord, MetricsReport, PortSampler, aggregate_report, window_count

log = logging.getLogger(__name__)

BITS_PER_MBIT = 1e6
EPHEMERAL_PORT_BASE = 49152
SERVER_IP = "203.0.113.10"
SERVER_PORT = 80
CONTROL_PACKET_BYTES = 64
DEFAULT_TIME_LIMIT = 3600.0
_EPS_BYTES = 1e-6


class ConfigError(ValueError):
    pass


@dataclass
class WorkloadConfig:
    """``ab``-style closed-loop workload.

    ``stall_rate_mbps`` is the per-flow rate at or below which a transfer
    counts as making no progress for the socket timeout; 0 means only a
    truly zero rate stalls.
    """

    total_requests: int = 100
    file_size: int = 100_000
    concurrency: int = 20
    socket_timeout: float = 10.0
    per_request_overhead: float = 0.0
    stall_rate_mbps: float = 0.0

    def __post_init__(self):
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if self.total_requests < 0:
            raise ConfigError("total_requests must be >= 0")
        if self.file_size <= 0:
            raise ConfigError("file_size must be positive")
        if self.socket_timeout <= 0:
            raise ConfigError("socket_timeout must be positive")
        if self.per_request_overhead < 0 or self.stall_rate_mbps < 0:
            raise ConfigError("overhead and stall rate must be non-negative")


class SessionState(enum.Enum):
    HANDSHAKING = "Handshaking"
    TRANSFERRING = "Transferring"
    DONE = "Done"
    ABORTED = "Aborted"


@dataclass
class FlowSession:
    session_id: int
    tcp_src_port: int
    file_size: int
    start_time: float
    state: SessionState = SessionState.HANDSHAKING
    iface: Optional[int] = None
    bytes_done: float = 0.0
    end_time: Optional[float] = None
    stall_started: Optional[float] = None
    current_rate: float = 0.0
    reported: int = 0
    integrated_bits: float = 0.0
    version: int = 0
    stall_version: int = 0
    ports_seen: set = field(default_factory=set)

    @property
    def remaining(self) -> float:
        return self.file_size - self.bytes_done


class EventKind(enum.IntEnum):
    # tie order at equal timestamps
    FLOW_ARRIVAL = 0
    FLOW_COMPLETION = 1
    CAPACITY_CHANGE = 2
    STATS_SAMPLE = 3
    SOCKET_TIMEOUT_CHECK = 4
    ARP_EXCHANGE = 5


@dataclass(order=True)
class Event:
    time: float
    kind: EventKind
    session_id: int
    seq: int
    version: int = field(default=0, compare=False)


@dataclass
class LinkState:
    link_id: int
    trace: BandwidthTrace
    active: set = field(default_factory=set)

    def capacity(self, t: float) -> float:
        return self.trace.bandwidth_at(t)


def allocate_rates(links: Sequence[LinkState], flows: Iterable[FlowSession], t: float) -> dict[int, float]:
    """Equal split of each last-hop link among its transferring flows (Mbps)."""
    by_link: dict[int, list[int]] = {}
    rates: dict[int, float] = {}
    for f in flows:
        if f.iface is None:
            rates[f.session_id] = 0.0
        else:
            by_link.setdefault(f.iface, []).append(f.session_id)
    for link in links:
        members = by_link.get(link.link_id, [])
        if members:
            share = link.capacity(t) / len(members)
            for sid in members:
                rates[sid] = share
    return rates


class Simulation:
    """One scenario run.  Instances share no state and may run side by side."""

    def __init__(self, scenario):
        self.scenario = scenario
        self.workload: WorkloadConfig = scenario.workload
        traces = list(scenario.resolved_traces())
        if not traces:
            raise ConfigError("scenario needs at least one link")
        self.links = [LinkState(k, tr) for k, tr in enumerate(traces)]
        n = len(self.links)
        interfaces = scenario.interfaces or default_interfaces(n)
        if len(interfaces) != n:
            raise ConfigError(f"{len(interfaces)} interface profiles for {n} links")
        self.mode, self.single_index = scenario.mode_spec()
        self.label = scenario.label or mode_label(self.mode, self.single_index)
        self.time_limit = scenario.duration if scenario.duration is not None else DEFAULT_TIME_LIMIT

        self.switch = Switch(n, hash_basis=scenario.seed if self.mode.is_group else 0)
        self.controller = Controller(
            interfaces=list(interfaces),
            mode=self.mode,
            single_index=self.single_index,
            bandwidth_source=lambda t: [link.capacity(t) for link in self.links],
        )
        self.switch.listeners.append(self._on_egress)
        self.sampler = PortSampler(self.switch)

        self.t = 0.0
        self.heap: list[Event] = []
        self._seq = 0
        self.sessions: dict[int, FlowSession] = {}
        self.by_port: dict[int, FlowSession] = {}
        self.in_flight: set[int] = set()
        self.issued = 0
        self.next_port = EPHEMERAL_PORT_BASE
        self.records: list[DownloadRecord] = []
        self.samples = []
        self.event_log: list[tuple] = []
        self.nat_violations = 0
        self.arp_resolved: dict[str, str] = {}

    # -- event queue

    def schedule(self, time: float, kind: EventKind, session_id: int = -1, version: int = 0) -> None:
        heapq.heappush(self.heap, Event(time, kind, session_id, self._seq, version))
        self._seq += 1

    def _is_stale(self, ev: Event) -> bool:
        if ev.kind is EventKind.FLOW_COMPLETION:
            s = self.sessions[ev.session_id]
            return s.state is not SessionState.TRANSFERRING or s.version != ev.version
        if ev.kind is EventKind.SOCKET_TIMEOUT_CHECK:
            s = self.sessions[ev.session_id]
            return s.state is not SessionState.TRANSFERRING or s.stall_version != ev.version
        return False

    def advance_to_next_event(self) -> Optional[Event]:
        """Pop the earliest live event and integrate flow progress up to it.

        Returns None once the queue is exhausted or the next event lies past
        the time limit (in which case the clock stops at the limit).
        """
        while self.heap:
            ev = heapq.heappop(self.heap)
            if self._is_stale(ev):
                continue
            if ev.time > self.time_limit:
                self._advance(self.time_limit)
                return None
            self._advance(ev.time)
            self.event_log.append((ev.time, ev.kind.name, ev.session_id))
            return ev
        return None

    def _advance(self, t: float) -> None:
        dt = t - self.t
        if dt > 0:
            for sid in self.in_flight:
                s = self.sessions[sid]
                if s.state is SessionState.TRANSFERRING and s.current_rate > 0:
                    bits = s.current_rate * BITS_PER_MBIT * dt
                    s.integrated_bits += bits
                    s.bytes_done = min(float(s.file_size), s.bytes_done + bits / 8)
        self.t = max(self.t, t)
        self.switch.now = self.t

    # -- packets

    def _on_egress(self, event: EgressEvent, in_port: Optional[str]) -> None:
        sid = event.pkt.session_id
        if sid is None or sid not in self.sessions:
            return
        s = self.sessions[sid]
        if event.port == HOST_PORT:
            if in_port is not None:
                s.ports_seen.add(in_port)
            if event.pkt.ip_dst != self.controller.internal_ip or event.pkt.tcp_dst_port != s.tcp_src_port:
                self.nat_violations += 1
            return
        s.ports_seen.add(event.port)
        if s.iface is None:
            s.iface = int(event.port[3:])

    def _host_packet(self, s: FlowSession, flags: TcpFlag, size: int) -> PacketDescriptor:
        ctl = self.controller
        return PacketDescriptor(
            eth_src=ctl.internal_mac,
            eth_dst=self.arp_resolved.get(ctl.gateway_ip, ctl.gateway_mac),
            ip_src=ctl.internal_ip,
            ip_dst=SERVER_IP,
            tcp_src_port=s.tcp_src_port,
            tcp_dst_port=SERVER_PORT,
            flags=flags,
            size=size,
            session_id=s.session_id,
        )

    def _send_from_host(self, pkt: PacketDescriptor) -> None:
        result = self.switch.receive(pkt, HOST_PORT)
        if isinstance(result, ControllerEvent):
            try:
                self.controller.handle_packet_in(self.switch, result.pkt, self.t)
            except NoInterfacesAvailable as exc:
                log.warning("t=%.3f session %s: SYN dropped: %s", self.t, pkt.session_id, exc)

    def _flush(self, s: FlowSession) -> None:
        """Push the bytes downloaded since the last flush through the switch."""
        if s.iface is None:
            return
        whole = min(s.file_size, int(math.floor(s.bytes_done + 1e-7)))
        chunk = whole - s.reported
        if chunk <= 0:
            return
        iface = self.controller.interfaces[s.iface]
        pkt = PacketDescriptor(
            eth_src=iface.gw_mac,
            eth_dst=iface.mac,
            ip_src=SERVER_IP,
            ip_dst=iface.ip,
            tcp_src_port=SERVER_PORT,
            tcp_dst_port=s.tcp_src_port,
            flags=TcpFlag.ACK,
            size=chunk,
            session_id=s.session_id,
        )
        self.switch.receive(pkt, external_port(s.iface))
        s.reported = whole

    def _arp_exchange(self) -> None:
        ctl = self.controller
        self.event_log.append((self.t, EventKind.ARP_EXCHANGE.name, -1))
        request = PacketDescriptor(
            eth_src=ctl.internal_mac,
            eth_type=EthType.ARP,
            ip_src=ctl.internal_ip,
            ip_dst=ctl.gateway_ip,
            size=42,
        )
        self.switch.receive(request, HOST_PORT)
        for reply in ctl.arp_replies:
            self.arp_resolved[reply.pkt.ip_src] = reply.pkt.eth_src

    # -- sessions

    def spawn_request(self, t: float, replacement: bool = False) -> FlowSession:
        sid = len(self.sessions)
        s = FlowSession(sid, self.next_port, self.workload.file_size, t)
        self.next_port += 1
        self.sessions[sid] = s
        self.by_port[s.tcp_src_port] = s
        self.in_flight.add(sid)
        if not replacement:
            self.issued += 1
        self._send_from_host(self._host_packet(s, TcpFlag.SYN, CONTROL_PACKET_BYTES))
        self.schedule(t + self.workload.per_request_overhead, EventKind.FLOW_ARRIVAL, sid)
        return s

    def _start_transfer(self, s: FlowSession) -> None:
        self._send_from_host(self._host_packet(s, TcpFlag.ACK, CONTROL_PACKET_BYTES))
        s.state = SessionState.TRANSFERRING
        if s.iface is not None:
            self.links[s.iface].active.add(s.session_id)

    def _finish(self, s: FlowSession, outcome: SessionState) -> None:
        self._flush(s)
        s.state = outcome
        s.end_time = self.t
        s.current_rate = 0.0
        self.in_flight.discard(s.session_id)
        if s.iface is not None:
            self.links[s.iface].active.discard(s.session_id)
            self._send_from_host(self._host_packet(s, TcpFlag.FIN | TcpFlag.ACK, CONTROL_PACKET_BYTES))
        nbytes = s.file_size if outcome is SessionState.DONE else s.reported
        self.records.append(DownloadRecord(s.session_id, s.iface, s.start_time, s.end_time, outcome.value, nbytes))

    def _transferring(self) -> list[FlowSession]:
        return [self.sessions[sid] for sid in sorted(self.in_flight)
                if self.sessions[sid].state is SessionState.TRANSFERRING]

    def _reallocate(self) -> None:
        t = self.t
        flows = self._transferring()
        rates = allocate_rates(self.links, flows, t)
        threshold = self.workload.stall_rate_mbps
        for s in flows:
            rate = rates[s.session_id]
            if rate != s.current_rate or s.version == 0:
                s.current_rate = rate
                s.version += 1
                if rate > 0:
                    done_at = t + s.remaining * 8 / (rate * BITS_PER_MBIT)
                    self.schedule(done_at, EventKind.FLOW_COMPLETION, s.session_id, s.version)
            if rate <= threshold:
                if s.stall_started is None:
                    s.stall_started = t
                    s.stall_version += 1
                    self.schedule(t + self.workload.socket_timeout, EventKind.SOCKET_TIMEOUT_CHECK,
                                  s.session_id, s.stall_version)
            elif s.stall_started is not None:
                s.stall_started = None
                s.stall_version += 1

    def check_socket_timeout(self, t: float) -> list[FlowSession]:
        """Abort transfers without progress for the socket timeout and re-issue them."""
        aborted = []
        for s in self._transferring():
            if s.stall_started is not None and t - s.stall_started >= self.workload.socket_timeout - 1e-9:
                self._finish(s, SessionState.ABORTED)
                aborted.append(s)
        for _ in aborted:
            self.spawn_request(t, replacement=True)
        return aborted

    def _complete_due(self, sid: int) -> list[FlowSession]:
        # the event's own session is due by construction; others tie within float slack
        done = [s for s in self._transferring() if s.session_id == sid or s.remaining <= _EPS_BYTES]
        for s in done:
            s.bytes_done = float(s.file_size)
            self._finish(s, SessionState.DONE)
        return done

    def _refill(self, n_freed: int) -> None:
        for _ in range(n_freed):
            if self.issued < self.workload.total_requests:
                self.spawn_request(self.t)

    def _finished(self) -> bool:
        return self.issued >= self.workload.total_requests and not self.in_flight

    def _sample(self, t: float) -> None:
        for sid in sorted(self.in_flight):
            self._flush(self.sessions[sid])
        self.samples.append(self.sampler.sample(t))

    # -- main loop

    def run(self) -> MetricsReport:
        wl = self.workload
        traces = [link.trace for link in self.links]
        if wl.total_requests == 0:
            return aggregate_report([], [], traces, self.label)

        self.controller.install_base_rules(self.switch)
        self._arp_exchange()
        if self.mode.is_group:
            weights = self.controller.group_weights(0.0) if self.mode is Mode.GROUP_WEIGHTED else None
            self.controller.setup_group_mode(self.switch, weights)

        for link in self.links:
            for bp in link.trace.breakpoints(self.time_limit):
                self.schedule(bp, EventKind.CAPACITY_CHANGE)
        if self.time_limit >= 1.0:
            self.schedule(1.0, EventKind.STATS_SAMPLE)
        for _ in range(min(wl.concurrency, wl.total_requests)):
            self.spawn_request(0.0)

        while not self._finished():
            ev = self.advance_to_next_event()
            if ev is None:
                break
            if ev.kind is EventKind.FLOW_ARRIVAL:
                self._start_transfer(self.sessions[ev.session_id])
            elif ev.kind is EventKind.FLOW_COMPLETION:
                self._refill(len(self._complete_due(ev.session_id)))
            elif ev.kind is EventKind.STATS_SAMPLE:
                self._sample(ev.time)
                if ev.time + 1.0 <= self.time_limit:
                    self.schedule(ev.time + 1.0, EventKind.STATS_SAMPLE)
            elif ev.kind is EventKind.SOCKET_TIMEOUT_CHECK:
                self.check_socket_timeout(ev.time)
            self._reallocate()

        end = self.t
        for sid in sorted(self.in_flight):
            self._flush(self.sessions[sid])
        next_k = len(self.samples) + 1
        for k in range(next_k, window_count(end) + 1):
            self._sample(float(k))
        return aggregate_report(self.samples, self.records, traces, self.label)


def run(scenario) -> MetricsReport:
    return Simulation(scenario).run()
