"""Software inspection engine fed by the mirror port.

Tracks per-flow mirrored volume, reports each flow once when it crosses the
elephant threshold, and passes DNS A replies on to the broker.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .dns import DnsReply, MalformedDns, NoARecords, parse_dns_reply  # noqa: F401
from .pipeline import FlowKey, PacketRecord

ELEPHANT_THRESHOLD = 4_000_000
TRACKER_HORIZON = 120.0


@dataclass(slots=True)
class FlowTracker:
    key: FlowKey
    volume: int = 0
    first_seen: float = 0.0
    last_seen: float = 0.0
    elephant_reported: bool = False


@dataclass(frozen=True)
class ElephantEvent:
    key: FlowKey
    detected_at: float
    volume_at_detection: int
    flow_id: int = 0


@dataclass
class Inspector:
    threshold: int = ELEPHANT_THRESHOLD
    horizon: float = TRACKER_HORIZON
    trackers: dict = field(default_factory=dict)
    dns_replies: list = field(default_factory=list)

    def observe(self, pkt: PacketRecord) -> ElephantEvent | None:
        """Account a mirrored packet; returns an event the first time the
        flow's cumulative volume reaches the threshold."""
        if pkt.dns_payload is not None:
            reply = pkt.dns_payload
            if isinstance(reply, (bytes, bytearray)):
                try:
                    reply = parse_dns_reply(reply, pkt.timestamp)
                except (MalformedDns, NoARecords):
                    reply = None
            if reply is not None:
                self.dns_replies.append(reply)
        return observe_mirrored(self.trackers, pkt, self.threshold)

    def drain_dns(self) -> list:
        out, self.dns_replies = self.dns_replies, []
        return out

    def gc(self, now: float) -> int:
        return gc_trackers(self.trackers, now, self.horizon)


def observe_mirrored(trackers: dict, pkt: PacketRecord, threshold: int = ELEPHANT_THRESHOLD) -> ElephantEvent | None:
    tr = trackers.get(pkt.key)
    if tr is None:
        tr = trackers[pkt.key] = FlowTracker(pkt.key, 0, pkt.timestamp, pkt.timestamp)
    tr.volume += pkt.bytes
    tr.last_seen = pkt.timestamp
    if not tr.elephant_reported and tr.volume >= threshold:
        tr.elephant_reported = True
        return ElephantEvent(pkt.key, pkt.timestamp, tr.volume, pkt.flow_id)
    return None


def gc_trackers(trackers: dict, now: float, horizon: float = TRACKER_HORIZON) -> int:
    dead = [k for k, tr in trackers.items() if now - tr.last_seen > horizon]
    for k in dead:
        del trackers[k]
    return len(dead)
