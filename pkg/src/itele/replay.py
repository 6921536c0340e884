"""Virtual-time event loop wiring pipeline, inspector and broker together."""

from __future__ import annotations

import logging
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from . import pipeline
from .broker import Broker, Machines, ProviderMap
from .inspector import Inspector
from .pipeline import SwitchState

log = logging.getLogger(__name__)


@dataclass
class ReplayStats:
    link_bytes: dict = field(default_factory=lambda: defaultdict(int))  # second -> bytes
    mirror_bytes: dict = field(default_factory=lambda: defaultdict(int))
    entry_count: dict = field(default_factory=dict)  # second -> reactive entries
    installs: dict = field(default_factory=lambda: defaultdict(int))  # second -> installs
    packets: int = 0
    total_bytes: int = 0
    mirrored_total: int = 0
    max_entries: int = 0
    elephants: int = 0

    def series(self, name: str, first: int, last: int) -> list:
        table = getattr(self, name)
        return [(s, table.get(s, 0)) for s in range(first, last + 1)]


class Replay:
    """Feeds a time-ordered packet stream through the system.

    Whole-second ticks fire before any packet stamped at or after them: the
    broker polls when due (expiring idle entries and GC-ing trackers), records
    the entry count, then classifies flows whose 16 s verdict time has come.
    """

    def __init__(self, providers: ProviderMap | None = None, machines: Machines | None = None,
                 table_capacity: int = pipeline.DEFAULT_TABLE_CAPACITY, speed: str = "max",
                 confirm_changes: bool = True):
        self.switch = SwitchState(table_capacity=table_capacity)
        self.inspector = Inspector()
        self.broker = Broker(self.switch, providers or ProviderMap(), machines or Machines(),
                             confirm_changes, volume_lookup=self._tracked_volume)
        self.stats = ReplayStats()
        self.speed = speed
        self.next_second: int | None = None
        self.first_second: int | None = None
        self._wall0 = None

    def _tracked_volume(self, key) -> int:
        tr = self.inspector.trackers.get(key)
        return tr.volume if tr else 0

    def tick(self, t: int) -> None:
        broker = self.broker
        if t >= broker.next_poll:
            broker.poll_tick(t)
            for key in broker.last_removed:
                # a resumed flow must be able to re-trigger detection
                self.inspector.trackers.pop(key, None)
            self.inspector.gc(t)
        n = len(self.switch.reactive_table)
        self.stats.entry_count[t] = n
        self.stats.max_entries = max(self.stats.max_entries, n)
        if broker.machines.ready:
            due = broker.due_for_classification(t)
            if due:
                broker.classify_tick(t, due)

    def advance(self, ts: float) -> None:
        if self.next_second is None:
            self.first_second = math.floor(ts)
            self.next_second = self.first_second + 1
        while self.next_second <= ts:
            self.tick(self.next_second)
            self.next_second += 1

    def _pace(self, ts: float) -> None:
        if self._wall0 is None:
            self._wall0 = (time.monotonic(), ts)
            return
        wall0, ts0 = self._wall0
        delay = (ts - ts0) - (time.monotonic() - wall0)
        if delay > 0:
            time.sleep(delay)

    def feed(self, packets: Iterable) -> None:
        stats = self.stats
        switch = self.switch
        inspector = self.inspector
        broker = self.broker
        process = pipeline.process_packet
        realtime = self.speed == "realtime"
        for pkt in packets:
            ts = pkt.timestamp
            if self.next_second is None or ts >= self.next_second:
                self.advance(ts)
            if realtime:
                self._pace(ts)
            decision = process(switch, pkt)
            sec = math.floor(ts)
            stats.packets += 1
            stats.total_bytes += pkt.bytes
            stats.link_bytes[sec] += pkt.bytes
            if decision.mirrored:
                stats.mirror_bytes[sec] += pkt.bytes
                stats.mirrored_total += pkt.bytes
                event = inspector.observe(pkt)
                if inspector.dns_replies:
                    for reply in inspector.drain_dns():
                        broker.on_dns(reply)
                if event is not None:
                    stats.elephants += 1
                    if broker.handle_elephant(event) is not None:
                        stats.installs[sec] += 1

    def finish(self) -> None:
        """Run ticks up to and including the first whole second after the last
        packet, so a final poll captures every counter."""
        if self.next_second is None:
            return
        last = self.switch.clock
        end = math.floor(last) + 1
        self.advance(end)
        if self.broker.next_poll > end:
            # force a closing snapshot even when the polling interval is long
            self.broker.poll_tick(end + 0.5)

    def run(self, packets: Iterable) -> "Replay":
        self.feed(packets)
        self.finish()
        return self

    @property
    def last_second(self) -> int:
        return (self.next_second or 1) - 1
