"""Labeled synthetic traffic: video streams, bulk downloads, application mice,
DNS replies, and the constant-rate stress workload.

Flows are first modelled as per-second byte counts; traces are produced by
cutting each second into MTU-sized records.
"""

from __future__ import annotations

import heapq
import math
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from . import dns
from .features import ATTRIBUTE_NAMES, SUBPROFILE_WINDOWS, TrafficProfile, attributes, make_subprofiles
from .ml.dataset import IDENTIFIER_CLASSES, RESOLUTION_CLASSES, Dataset
from .pipeline import TCP, UDP, Direction, FlowKey, PacketRecord

MTU = 1500
RESOLUTIONS = RESOLUTION_CLASSES

DEFAULT_SUFFIXES = {
    "googlevideo.com": "Youtube",
    "nflxvideo.net": "Netflix",
    "ttvnw.net": "Twitch",
    "fbcdn.net": "Facebook",
}
PROVIDER_SUFFIX = {p: s for s, p in DEFAULT_SUFFIXES.items()}
_SERVER_PREFIX = {
    "Youtube": (173, 194),
    "Netflix": (198, 38),
    "Twitch": (52, 223),
    "Facebook": (157, 240),
    "Unknown": (203, 0),
}
RESOLVER_IP = "10.255.0.53"


class UnknownProvider(KeyError):
    pass


def mbps(x: float) -> float:
    """Megabits per second -> bytes per second."""
    return x * 1e6 / 8


@dataclass(frozen=True)
class VideoModelParams:
    nominal_rate: float  # bytes/s
    initial_burst_seconds: int
    chunk_period: tuple  # (min, max) seconds, drawn per flow
    chunk_duty: float
    jitter: float


DEFAULT_VIDEO_PARAMS = {
    "low": VideoModelParams(mbps(0.4), 16, (4.0, 10.0), 0.30, 0.2),
    "medium": VideoModelParams(mbps(1.5), 20, (4.0, 10.0), 0.45, 0.2),
    "high": VideoModelParams(mbps(4.0), 24, (4.0, 10.0), 0.60, 0.2),
    "ultrahigh": VideoModelParams(mbps(16.0), 28, (4.0, 10.0), 0.85, 0.3),
}

DOWNLOAD_RATE_RANGE = (mbps(0.5), mbps(40.0))


@dataclass(frozen=True)
class StreamSpec:
    kind: str  # "video" | "download" | "app_mice"
    duration: int = 128
    start_time: float = 0.0
    rng_seed: int = 0
    provider: str = "Unknown"
    resolution: str | None = None
    flow_id: int = 0

    def __post_init__(self):
        if self.kind not in ("video", "download", "app_mice"):
            raise ValueError(f"unknown stream kind {self.kind!r}")
        if self.duration < 1:
            raise ValueError("duration must be >= 1 s")
        if self.kind == "video" and self.resolution not in RESOLUTIONS:
            raise ValueError(f"video needs a resolution class in {RESOLUTIONS}")


@dataclass(frozen=True)
class FlowTruth:
    kind: str
    resolution: str | None
    provider: str

    @property
    def is_video(self) -> bool:
        return self.kind == "video"


@dataclass
class LabeledTrace:
    packets: Iterable  # time-ordered PacketRecords
    truth: dict = field(default_factory=dict)  # flow_id -> FlowTruth
    keys: dict = field(default_factory=dict)  # flow_id -> FlowKey of the data direction


def _on_overlap(t0: float, t1: float, first_on: float, period: float, on: float) -> float:
    """Time in [t0, t1) covered by on-intervals [first_on + m*period, +on)."""
    if t1 <= first_on:
        return 0.0
    m0 = max(0, math.floor((t0 - first_on) / period))
    total = 0.0
    m = m0
    while True:
        s = first_on + m * period
        if s >= t1:
            break
        total += max(0.0, min(t1, s + on) - max(t0, s))
        m += 1
    return total


def video_bins(resolution: str, duration: int, rng, params: dict | None = None) -> np.ndarray:
    p = (params or DEFAULT_VIDEO_PARAMS)[resolution]
    rate = p.nominal_rate * rng.lognormal(0.0, 0.2)
    burst = max(1, int(round(p.initial_burst_seconds * rng.uniform(0.6, 1.4))))
    period = rng.uniform(*p.chunk_period)
    duty = float(np.clip(p.chunk_duty + rng.uniform(-0.05, 0.05), 0.05, 1.0))
    phase = rng.uniform(0.0, period)
    on = duty * period
    bins = np.zeros(duration)
    for t in range(duration):
        if t < burst:
            bins[t] = 2.0 * rate
        else:
            bins[t] = _on_overlap(t, t + 1, burst + phase - period, period, on) * rate / duty
    jitter = rng.uniform(1.0 - p.jitter, 1.0 + p.jitter, duration)
    return bins * jitter


def download_bins(duration: int, rng, stall_prob: float = 0.01) -> np.ndarray:
    lo, hi = DOWNLOAD_RATE_RANGE
    rate = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    # slowly wandering throughput around the flow's rate
    level = np.empty(duration)
    x = 0.0
    for t in range(duration):
        x = 0.8 * x + rng.normal(0.0, 0.05)
        level[t] = x
    bins = rate * np.exp(level) * rng.uniform(0.95, 1.05, duration)
    bins[rng.random(duration) < stall_prob] = 0.0
    return bins


def mice_bins(duration: int, rng) -> np.ndarray:
    """A few short bursts totalling well under the elephant threshold."""
    total = rng.uniform(10e3, 3e6)
    n_bursts = int(rng.integers(1, 5))
    bins = np.zeros(duration)
    starts = rng.integers(0, duration, n_bursts)
    share = rng.dirichlet(np.ones(n_bursts)) * total
    for s, b in zip(starts, share):
        bins[s] += b
    return bins


def stream_bins(spec: StreamSpec, params: dict | None = None) -> np.ndarray:
    rng = np.random.default_rng(spec.rng_seed)
    if spec.kind == "video":
        return video_bins(spec.resolution, spec.duration, rng, params)
    if spec.kind == "download":
        return download_bins(spec.duration, rng)
    return mice_bins(spec.duration, rng)


def integer_bins(bins) -> np.ndarray:
    """Round per-second byte amounts to integers while preserving the running
    total (floor of the cumulative sum)."""
    cum = np.floor(np.cumsum(np.asarray(bins, dtype=float)))
    return np.diff(np.concatenate([[0.0], cum])).astype(np.int64)


def flow_endpoints(spec: StreamSpec) -> FlowKey:
    fid = spec.flow_id
    a, b = _SERVER_PREFIX.get(spec.provider, _SERVER_PREFIX["Unknown"])
    server = f"{a}.{b}.{(fid >> 8) & 0xFF}.{(fid & 0xFF) or 1}"
    client = f"10.{(fid >> 16) & 0xFF}.{(fid >> 8) & 0xFF}.{fid & 0xFF}"
    port = 1024 + fid % 60000
    return FlowKey(server, client, 443, port, TCP)


def packetize(bins, key: FlowKey, start_time: float, flow_id: int = 0, mtu: int = MTU) -> list:
    out = []
    for s, b in enumerate(integer_bins(bins)):
        if b <= 0:
            continue
        full, tail = divmod(int(b), mtu)
        sizes = [mtu] * full + ([tail] if tail else [])
        n = len(sizes)
        base = start_time + s
        for i, size in enumerate(sizes):
            out.append(PacketRecord(base + (i + 0.5) / n, key, size, Direction.DOWNSTREAM, None, flow_id))
    return out


def generate_stream(spec: StreamSpec, params: dict | None = None) -> LabeledTrace:
    key = flow_endpoints(spec)
    packets = packetize(stream_bins(spec, params), key, spec.start_time, spec.flow_id)
    truth = FlowTruth(spec.kind, spec.resolution, spec.provider)
    return LabeledTrace(packets, {spec.flow_id: truth}, {spec.flow_id: key})


def dns_name(provider: str, rng=None, suffixes: dict | None = None) -> str:
    table = PROVIDER_SUFFIX if suffixes is None else {p: s for s, p in suffixes.items()}
    if provider not in table:
        raise UnknownProvider(provider)
    tag = "" if rng is None else f"{int(rng.integers(0, 1 << 24)):06x}"
    return f"r1---sn-{tag or 'cache'}.{table[provider]}"


def generate_dns(provider: str, server_ip: str, at: float, client_ip: str = "10.0.0.1",
                 rng=None, suffixes: dict | None = None) -> PacketRecord:
    """DNS A reply for a name under the provider's suffix resolving to
    ``server_ip``. The reply goes through the wire encoder and parser."""
    name = dns_name(provider, rng, suffixes)
    wire = dns.encode_a_reply(name, [server_ip])
    reply = dns.parse_dns_reply(wire, at)
    key = FlowKey(RESOLVER_IP, client_ip, 53, 33000 + (zlib.crc32(name.encode()) & 0x7FFF), UDP)
    return PacketRecord(at, key, len(wire) + 28, Direction.DOWNSTREAM, reply, 0)


def merge_fragments(fragments: list) -> LabeledTrace:
    """k-way merge of time-ordered fragments into one trace."""
    truth, keys = {}, {}
    for f in fragments:
        truth.update(f.truth)
        keys.update(f.keys)
    packets = list(heapq.merge(*(f.packets for f in fragments), key=lambda p: p.timestamp))
    return LabeledTrace(packets, truth, keys)


def generate_trace(specs: list, with_dns: bool = True, params: dict | None = None) -> LabeledTrace:
    fragments = []
    for spec in specs:
        frag = generate_stream(spec, params)
        if with_dns and spec.provider in PROVIDER_SUFFIX:
            key = frag.keys[spec.flow_id]
            rng = np.random.default_rng(spec.rng_seed + 7919)
            pkt = generate_dns(spec.provider, key.src_ip, max(0.0, spec.start_time - 0.05), key.dst_ip, rng)
            frag.packets.insert(0, pkt)
        fragments.append(frag)
    return merge_fragments(fragments)


def derive_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def profile_instances(bins, flow_id: int = 0):
    """Attribute rows and window labels for the 8 sub-profiles of a 128 s flow."""
    subs = make_subprofiles(TrafficProfile(0.0, bins))
    rows = [attributes(s).as_array() for s in subs]
    labels = [f"{a}-{b}" for a, b in SUBPROFILE_WINDOWS]
    return rows, labels


def generate_dataset(n_video: int, n_download: int, rng_seed: int = 0, params: dict | None = None):
    """Identifier and resolution datasets from 128 s flows, 8 sub-profile
    instances per flow. Video flows cycle through the resolution classes."""
    if n_video < 0 or n_download < 0 or n_video + n_download < 1:
        raise ValueError("need at least one flow")
    id_rows, id_labels, id_win, id_flow = [], [], [], []
    res_rows, res_labels, res_win, res_flow = [], [], [], []
    flows = [("video", RESOLUTIONS[i % len(RESOLUTIONS)]) for i in range(n_video)]
    flows += [("download", None)] * n_download
    for fid, (kind, res) in enumerate(flows):
        spec = StreamSpec(kind, 128, 0.0, derive_seed(rng_seed, fid), resolution=res, flow_id=fid)
        rows, wins = profile_instances(integer_bins(stream_bins(spec, params)).astype(float), fid)
        label = "video" if kind == "video" else "nonvideo"
        id_rows += rows
        id_labels += [label] * len(rows)
        id_win += wins
        id_flow += [fid] * len(rows)
        if kind == "video":
            res_rows += rows
            res_labels += [res] * len(rows)
            res_win += wins
            res_flow += [fid] * len(rows)
    ident = Dataset.from_rows(id_rows, id_labels, IDENTIFIER_CLASSES, id_win, id_flow)
    resol = Dataset.from_rows(res_rows, res_labels, RESOLUTION_CLASSES, res_win, res_flow) if res_rows else None
    return ident, resol


class StressTrace:
    """Constant-rate stress workload, generated lazily in time order.

    ``n_pairs`` transmitter/receiver pairs each run ``blocks_per_pair`` stream
    blocks; every second each block moves to its next destination port, so
    a new flow starts per block per second until ``ports_per_block`` ports
    have been used. Flows then run at their constant rate until ``duration``.
    Every record aggregates one flow's bytes for one second.
    """

    def __init__(self, n_pairs=14, blocks_per_pair=20, ports_per_block=114, rate_range=(0.8, 1.2),
                 duration=300, rng_seed=0, mtu=MTU):
        if min(n_pairs, blocks_per_pair, ports_per_block, duration) <= 0 or rate_range[0] <= 0:
            raise ValueError("stress parameters must be positive")
        self.n_pairs, self.blocks_per_pair, self.ports_per_block = n_pairs, blocks_per_pair, ports_per_block
        self.duration, self.mtu = int(duration), mtu
        self.n_blocks = n_pairs * blocks_per_pair
        self.n_flows = self.n_blocks * ports_per_block
        rng = np.random.default_rng(rng_seed)
        self.rates_mbps = rng.uniform(rate_range[0], rate_range[1], self.n_flows)
        self.rates = mbps(self.rates_mbps)  # bytes/s
        # flow f = slot * n_blocks + block; slot is also its start second
        self.start = np.arange(self.n_flows) // self.n_blocks
        self.keys = [self._key(f) for f in range(self.n_flows)]

    def _key(self, f: int) -> FlowKey:
        slot, block = divmod(f, self.n_blocks)
        pair, blk = divmod(block, self.blocks_per_pair)
        tx = f"198.18.{pair}.1"
        rx = f"198.19.{pair}.1"
        return FlowKey(tx, rx, 5000 + blk, 10000 + blk * self.ports_per_block + slot, TCP)

    @property
    def truth(self) -> dict:
        return {f: FlowTruth("stress", None, "Unknown") for f in range(self.n_flows)}

    def flow_bytes(self) -> np.ndarray:
        """Total bytes each flow sends over the run."""
        active = np.clip(self.duration - self.start, 0, None)
        return np.floor(self.rates * active).astype(np.int64)

    def __iter__(self) -> Iterator[PacketRecord]:
        sent = np.zeros(self.n_flows, dtype=np.int64)
        mtu = self.mtu
        keys = self.keys
        for s in range(self.duration):
            n_active = min(self.n_flows, (s + 1) * self.n_blocks)
            target = np.floor(self.rates[:n_active] * (s + 1 - self.start[:n_active])).astype(np.int64)
            delta = target - sent[:n_active]
            sent[:n_active] = target
            ts = s + 0.5
            for f in np.flatnonzero(delta > 0).tolist():
                b = int(delta[f])
                yield PacketRecord(ts, keys[f], b, Direction.DOWNSTREAM, None, f, -(-b // mtu))

    def as_trace(self) -> LabeledTrace:
        return LabeledTrace(self, self.truth, dict(enumerate(self.keys)))


def generate_stress(n_pairs=14, blocks_per_pair=20, ports_per_block=114, rate_range=(0.8, 1.2),
                    duration=300, rng_seed=0) -> LabeledTrace:
    return StressTrace(n_pairs, blocks_per_pair, ports_per_block, rate_range, duration, rng_seed).as_trace()
