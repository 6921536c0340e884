"""Behavioral model of the switch's multi-table pipeline.

Table 0 holds reactive 5-tuple entries (highest priority, idle timeout),
Table 1 proactively forwards and mirrors all TCP/UDP, Table 2 is the
default cross-connect. Matched reactive entries point at a per-provider
group whose counters aggregate the provider's volume.
"""

from __future__ import annotations

import ipaddress
from functools import lru_cache
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Iterator, NamedTuple

TCP = 6
UDP = 17
OTHER = 0

PORT_IN = 1
PORT_OUT = 2
PORT_MIRROR = 3

DEFAULT_IDLE_TIMEOUT = 60.0
DEFAULT_TABLE_CAPACITY = 100_000
POLL_CHUNK = 2500


class PipelineError(Exception):
    pass


class DuplicateEntry(PipelineError):
    pass


class TableFull(PipelineError):
    pass


class UnknownGroup(PipelineError):
    pass


@lru_cache(maxsize=1 << 16)
def _ip_int(ip: str) -> int:
    return int(ipaddress.IPv4Address(ip))


class Direction(str, Enum):
    DOWNSTREAM = "provider->consumer"
    UPSTREAM = "consumer->provider"


class FlowKey(NamedTuple):
    """5-tuple flow identity. IPs are kept as dotted strings; ordering is
    numeric so sorted() gives a stable, meaningful enumeration."""

    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    proto: int

    @classmethod
    def make(cls, src_ip, dst_ip, src_port, dst_port, proto) -> "FlowKey":
        proto = int(proto)
        if proto not in (TCP, UDP):
            proto = OTHER
            src_port = dst_port = 0
        for port in (src_port, dst_port):
            if not 0 <= int(port) <= 0xFFFF:
                raise ValueError(f"port out of range: {port}")
        ipaddress.IPv4Address(src_ip)
        ipaddress.IPv4Address(dst_ip)
        return cls(str(src_ip), str(dst_ip), int(src_port), int(dst_port), proto)

    def sort_key(self):
        return (
            _ip_int(self.src_ip),
            _ip_int(self.dst_ip),
            self.src_port,
            self.dst_port,
            self.proto,
        )

    def reversed(self) -> "FlowKey":
        return FlowKey(self.dst_ip, self.src_ip, self.dst_port, self.src_port, self.proto)

    def __str__(self) -> str:
        return f"{self.src_ip}:{self.src_port}->{self.dst_ip}:{self.dst_port}/{self.proto}"


@dataclass(slots=True)
class PacketRecord:
    """One trace event. ``count`` is the number of wire packets the record
    stands for (1 for MTU records, more for per-second aggregate records)."""

    timestamp: float
    key: FlowKey
    bytes: int
    direction: Direction = Direction.DOWNSTREAM
    dns_payload: Any = None
    flow_id: int = 0
    count: int = 1

    def __post_init__(self):
        if self.bytes < 1:
            raise ValueError("packet bytes must be >= 1")
        if self.count < 1:
            raise ValueError("packet count must be >= 1")
        if self.dns_payload is not None and not (
            self.key.proto == UDP and self.key.src_port == 53
        ):
            raise ValueError("DNS payload only allowed on UDP packets from port 53")


@dataclass(slots=True)
class ReactiveEntry:
    key: FlowKey
    group_id: int
    byte_count: int = 0
    packet_count: int = 0
    installed_at: float = 0.0
    last_matched: float = 0.0
    idle_timeout: float = DEFAULT_IDLE_TIMEOUT


@dataclass(slots=True)
class GroupEntry:
    group_id: int
    provider: str
    byte_count: int = 0
    packet_count: int = 0


@dataclass(frozen=True)
class ForwardDecision:
    output_ports: frozenset
    matched_table: str  # "reactive" | "proactive" | "default"

    @property
    def mirrored(self) -> bool:
        return PORT_MIRROR in self.output_ports


_REACTIVE = ForwardDecision(frozenset({PORT_OUT}), "reactive")
_PROACTIVE = ForwardDecision(frozenset({PORT_OUT, PORT_MIRROR}), "proactive")
_DEFAULT = ForwardDecision(frozenset({PORT_OUT}), "default")


@dataclass
class CounterSnapshot:
    """Immutable-by-convention copy of the switch counters at one instant."""

    time: float
    flows: list  # (FlowKey, byte_count, packet_count), key-sorted
    groups: list  # (provider, byte_count), group-id order

    def chunks(self, size: int = POLL_CHUNK) -> Iterator[list]:
        """Multi-part reply as the switch agent would send it."""
        for i in range(0, len(self.flows), size):
            yield self.flows[i:i + size]


@dataclass
class SwitchState:
    table_capacity: int = DEFAULT_TABLE_CAPACITY
    idle_timeout: float = DEFAULT_IDLE_TIMEOUT
    reactive_table: dict = field(default_factory=dict)
    group_table: dict = field(default_factory=dict)
    ports: dict = field(default_factory=lambda: {"in": PORT_IN, "out": PORT_OUT, "mirror": PORT_MIRROR})
    clock: float = float("-inf")
    _provider_groups: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "table_capacity": self.table_capacity,
            "ports": dict(self.ports),
            "reactive_table": [
                {**asdict(e), "key": list(e.key)}
                for _, e in sorted(self.reactive_table.items(), key=lambda kv: kv[0].sort_key())
            ],
            "group_table": [asdict(g) for _, g in sorted(self.group_table.items())],
        }


def process_packet(state: SwitchState, pkt: PacketRecord) -> ForwardDecision:
    if pkt.timestamp < state.clock:
        raise ValueError(f"non-monotone timestamp {pkt.timestamp} < {state.clock}")
    state.clock = pkt.timestamp
    entry = state.reactive_table.get(pkt.key)
    if entry is not None:
        entry.byte_count += pkt.bytes
        entry.packet_count += pkt.count
        entry.last_matched = pkt.timestamp
        group = state.group_table[entry.group_id]
        group.byte_count += pkt.bytes
        group.packet_count += pkt.count
        return _REACTIVE
    if pkt.key.proto == TCP or pkt.key.proto == UDP:
        return _PROACTIVE
    return _DEFAULT


def install_reactive(state: SwitchState, key: FlowKey, group_id: int, now: float | None = None) -> ReactiveEntry:
    if group_id not in state.group_table:
        raise UnknownGroup(group_id)
    if key in state.reactive_table:
        raise DuplicateEntry(str(key))
    if len(state.reactive_table) >= state.table_capacity:
        raise TableFull(f"reactive table at capacity {state.table_capacity}")
    t = state.clock if now is None else now
    if t == float("-inf"):
        t = 0.0
    entry = ReactiveEntry(key, group_id, installed_at=t, last_matched=t, idle_timeout=state.idle_timeout)
    state.reactive_table[key] = entry
    return entry


def ensure_group(state: SwitchState, provider: str) -> int:
    if not provider:
        raise ValueError("provider name must be non-empty")
    gid = state._provider_groups.get(provider)
    if gid is None:
        gid = len(state.group_table) + 1
        state.group_table[gid] = GroupEntry(gid, provider)
        state._provider_groups[provider] = gid
    return gid


def expire_idle(state: SwitchState, now: float) -> list:
    """Remove entries idle for strictly more than their timeout."""
    dead = [k for k, e in state.reactive_table.items() if now - e.last_matched > e.idle_timeout]
    dead.sort(key=FlowKey.sort_key)
    for k in dead:
        del state.reactive_table[k]
    return dead


def poll_counters(state: SwitchState, now: float | None = None) -> CounterSnapshot:
    flows = [
        (k, e.byte_count, e.packet_count)
        for k, e in sorted(state.reactive_table.items(), key=lambda kv: kv[0].sort_key())
    ]
    groups = [(g.provider, g.byte_count) for _, g in sorted(state.group_table.items())]
    return CounterSnapshot(state.clock if now is None else now, flows, groups)
