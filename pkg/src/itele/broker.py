"""Data broker: turns elephant events into reactive entries, polls counters
into per-flow sample series, and runs the two classifiers on a 16 s cadence."""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import pipeline
from .features import TrafficProfile, attributes
from .inspector import ElephantEvent
from .pipeline import FlowKey, SwitchState, TableFull

log = logging.getLogger(__name__)

UNKNOWN = "Unknown"
CLASSIFY_PERIOD = 16
MAX_WINDOW = 64
MIN_BINS = 16

FAST_POLL_BELOW = 2500
SLOW_POLL_FROM = 10000


class InsufficientData(Exception):
    pass


def polling_interval(n_entries: int) -> int:
    """1 s below 2500 entries, 4 s from 10000, linear with ceiling between."""
    if n_entries < 0:
        raise ValueError("entry count must be >= 0")
    if n_entries < FAST_POLL_BELOW:
        return 1
    if n_entries >= SLOW_POLL_FROM:
        return 4
    frac = (n_entries - FAST_POLL_BELOW) / (SLOW_POLL_FROM - FAST_POLL_BELOW)
    return min(4, max(1, math.ceil(1 + 3 * frac)))


def registrable_domain(name: str) -> str:
    labels = name.rstrip(".").lower().split(".")
    return ".".join(labels[-2:])


@dataclass
class ProviderMap:
    suffix_to_provider: dict = field(default_factory=dict)
    dns_history: list = field(default_factory=list)  # (timestamp, query_name, ip), time-sorted
    _by_ip: dict = field(default_factory=dict, repr=False)

    def provider_for_name(self, name: str) -> str:
        name = name.rstrip(".").lower()
        best = None
        for suffix, provider in self.suffix_to_provider.items():
            s = suffix.lower().lstrip(".")
            if name == s or name.endswith("." + s):
                if best is None or len(s) > len(best[0]):
                    best = (s, provider)
        return best[1] if best else registrable_domain(name)

    def add_reply(self, reply) -> None:
        for ip in reply.answer_ips:
            self.add_record(reply.timestamp, reply.query_name, ip)

    def add_record(self, timestamp: float, name: str, ip: str) -> None:
        rec = (float(timestamp), name, ip)
        if self.dns_history and timestamp < self.dns_history[-1][0]:
            bisect.insort(self.dns_history, rec)
        else:
            self.dns_history.append(rec)
        times, names = self._by_ip.setdefault(ip, ([], []))
        i = bisect.bisect_right(times, float(timestamp))
        times.insert(i, float(timestamp))
        names.insert(i, name)

    def lookup(self, ip: str, at: float) -> str:
        if ip not in self._by_ip:
            return UNKNOWN
        times, names = self._by_ip[ip]
        i = bisect.bisect_right(times, float(at))
        if i == 0:
            return UNKNOWN
        return self.provider_for_name(names[i - 1])


def lookup_provider(ip: str, at: float, providers: ProviderMap) -> str:
    return providers.lookup(ip, at)


def load_provider_map(path) -> ProviderMap:
    """Lines of ``suffix<TAB>provider``; blank lines and ``#`` comments skipped."""
    table = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ValueError(f"{path}:{lineno}: expected 'suffix<TAB>provider'")
            table[parts[0].strip().lower()] = parts[1].strip()
    return ProviderMap(table)


@dataclass
class FlowSampleSeries:
    key: FlowKey
    provider: str
    start_time: float
    base_bytes: int = 0  # mirrored volume seen before the entry existed
    flow_id: int = 0
    samples: list = field(default_factory=list)  # (poll_time, cumulative bytes)
    end_time: float | None = None

    @property
    def origin(self) -> int:
        """First whole second of the profile; verdicts fall on origin + 16 k."""
        return math.ceil(self.start_time)

    @property
    def total_bytes(self) -> int:
        return self.samples[-1][1] if self.samples else self.base_bytes

    def add(self, t: float, cumulative: int) -> bool:
        if self.samples:
            last_t, last_b = self.samples[-1]
            if t <= last_t:
                return False
            if cumulative < last_b:
                raise ValueError("cumulative byte count decreased")
        self.samples.append((float(t), int(cumulative)))
        return True

    def profile(self, now: float, max_window: int = MAX_WINDOW) -> TrafficProfile:
        """Per-second profile over the last min(age, max_window) whole seconds
        ending at the latest poll. Poll deltas spanning several seconds are
        spread evenly across them."""
        last = min(now, self.samples[-1][0])
        end = math.floor(last)
        width = min(end - self.origin, max_window)
        if width < MIN_BINS:
            raise InsufficientData(f"{width} bins available for {self.key}")
        times = np.array([s[0] for s in self.samples])
        values = np.array([s[1] for s in self.samples], dtype=float)
        grid = np.arange(end - width, end + 1, dtype=float)
        cum = np.interp(grid, times, values)
        bins = np.maximum(np.diff(cum), 0.0)
        return TrafficProfile(float(end - width), bins)


@dataclass
class VideoVerdict:
    key: FlowKey
    provider: str
    is_video: bool = False
    resolution: str | None = None
    verdict_time: float | None = None
    history: list = field(default_factory=list)  # (time, is_video, resolution)
    changes: list = field(default_factory=list)  # times of counted resolution changes
    _confirmed: str | None = field(default=None, repr=False)
    _pending: str | None = field(default=None, repr=False)


@dataclass(frozen=True)
class VerdictRecord:
    """One line of the verdict log."""

    time: float
    flow_id: int
    key: FlowKey
    provider: str
    is_video: bool
    resolution: str | None
    change: bool
    start_time: float
    bytes: int
    attrs: tuple


@dataclass
class Machines:
    identifier: object = None
    resolution: object = None

    @property
    def ready(self) -> bool:
        return self.identifier is not None


class Broker:
    def __init__(self, switch: SwitchState | None = None, providers: ProviderMap | None = None,
                 machines: Machines | None = None, confirm_changes: bool = True, volume_lookup=None):
        self.switch = switch or SwitchState()
        self.providers = providers or ProviderMap()
        self.machines = machines or Machines()
        self.confirm_changes = confirm_changes
        self.volume_lookup = volume_lookup
        self.store: dict = {}  # FlowKey -> open FlowSampleSeries
        self.closed: list = []
        self.provider_series: dict = {}  # provider -> [(t, bytes)]
        self.verdicts: dict = {}  # FlowKey -> VideoVerdict (open flows)
        self.verdict_log: list = []
        self.pending: list = []  # elephant events that hit TableFull
        self.next_poll: float = -math.inf
        self.installs: list = []  # (time, FlowKey)
        self.table_full_events = 0
        self.last_removed: list = []

    # elephant handling

    def on_dns(self, reply) -> None:
        self.providers.add_reply(reply)

    def on_elephant(self, event: ElephantEvent) -> dict:
        key = event.key
        provider = self.providers.lookup(key.src_ip, event.detected_at)
        if provider == UNKNOWN:
            provider = self.providers.lookup(key.dst_ip, event.detected_at)
        gid = pipeline.ensure_group(self.switch, provider)
        entry = pipeline.install_reactive(self.switch, key, gid, event.detected_at)
        series = FlowSampleSeries(key, provider, event.detected_at, event.volume_at_detection, event.flow_id)
        series.add(event.detected_at, event.volume_at_detection)
        self.store[key] = series
        self.verdicts[key] = VideoVerdict(key, provider)
        self.installs.append((event.detected_at, key))
        log.debug("installed %s provider=%s group=%d", key, provider, gid)
        return {"key": key, "group_id": gid, "provider": provider, "installed_at": entry.installed_at}

    def handle_elephant(self, event: ElephantEvent) -> dict | None:
        """on_elephant, parking the event for retry when the table is full."""
        try:
            return self.on_elephant(event)
        except TableFull:
            self.table_full_events += 1
            self.pending.append(event)
            log.warning("reactive table full; %s stays mirrored", event.key)
            return None

    def _retry_pending(self, now: float) -> None:
        if not self.pending:
            return
        waiting, self.pending = self.pending, []
        for ev in waiting:
            if len(self.switch.reactive_table) >= self.switch.table_capacity:
                self.pending.append(ev)
                continue
            volume = self.volume_lookup(ev.key) if self.volume_lookup else ev.volume_at_detection
            self.on_elephant(ElephantEvent(ev.key, now, volume, ev.flow_id))

    # telemetry

    def poll_tick(self, now: float) -> int:
        snap = pipeline.poll_counters(self.switch, now)
        appended = 0
        for key, byte_count, _ in snap.flows:
            series = self.store.get(key)
            if series is not None and series.add(now, series.base_bytes + byte_count):
                appended += 1
        for provider, byte_count in snap.groups:
            self.provider_series.setdefault(provider, []).append((now, byte_count))
        removed = pipeline.expire_idle(self.switch, now)
        for key in removed:
            series = self.store.pop(key, None)
            if series is not None:
                series.end_time = now
                self.closed.append(series)
            self.verdicts.pop(key, None)
        self._retry_pending(now)
        self.next_poll = now + polling_interval(len(self.switch.reactive_table))
        self.last_removed = removed
        return appended

    # classification

    def classify_flow(self, series: FlowSampleSeries, now: float) -> VerdictRecord:
        profile = series.profile(now)
        attrs = attributes(profile)
        x = attrs.as_array().reshape(1, -1)
        ident = self.machines.identifier
        is_video = ident.class_set[int(ident.predict(x)[0])] == "video"
        resolution = None
        if is_video and self.machines.resolution is not None:
            res = self.machines.resolution
            resolution = res.class_set[int(res.predict(x)[0])]
        verdict = self.verdicts.setdefault(series.key, VideoVerdict(series.key, series.provider))
        verdict.is_video = is_video
        verdict.resolution = resolution
        verdict.verdict_time = now
        verdict.history.append((now, is_video, resolution))
        change = self._track_change(verdict, resolution)
        if change:
            verdict.changes.append(now)
        rec = VerdictRecord(now, series.flow_id, series.key, series.provider, is_video, resolution, change,
                            series.start_time, series.total_bytes, attrs.values())
        self.verdict_log.append(rec)
        return rec

    def _track_change(self, verdict: VideoVerdict, resolution: str | None) -> bool:
        if resolution is None:
            return False
        if verdict._confirmed is None:
            verdict._confirmed = resolution
            return False
        if resolution == verdict._confirmed:
            verdict._pending = None
            return False
        if not self.confirm_changes or verdict._pending == resolution:
            verdict._confirmed = resolution
            verdict._pending = None
            return True
        verdict._pending = resolution
        return False

    def classify_tick(self, now: float, keys=None) -> tuple[list, list]:
        """Classify the given (default: all open) flows at ``now``.

        Returns (verdict records, skipped keys); flows without 16 whole
        seconds of profile are skipped rather than raising."""
        if not self.machines.ready:
            return [], []
        updates, skipped = [], []
        for key in (sorted(self.store, key=FlowKey.sort_key) if keys is None else keys):
            series = self.store.get(key)
            if series is None:
                continue
            try:
                updates.append(self.classify_flow(series, now))
            except InsufficientData:
                skipped.append(key)
        return updates, skipped

    def due_for_classification(self, now: int) -> list:
        return sorted(
            (k for k, s in self.store.items()
             if now > s.origin and (now - s.origin) % CLASSIFY_PERIOD == 0),
            key=FlowKey.sort_key,
        )

    def all_series(self) -> list:
        return self.closed + list(self.store.values())
