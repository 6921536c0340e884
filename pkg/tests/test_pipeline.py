from collections import defaultdict

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itele import pipeline as pl
from itele.pipeline import OTHER, PORT_MIRROR, PORT_OUT, TCP, UDP, FlowKey, SwitchState

from conftest import key, pkt


def fresh(capacity=pl.DEFAULT_TABLE_CAPACITY):
    return SwitchState(table_capacity=capacity)


def test_tcp_without_entry_is_forwarded_and_mirrored():
    d = pl.process_packet(fresh(), pkt(0, key()))
    assert d.output_ports == {PORT_OUT, PORT_MIRROR}
    assert d.matched_table == "proactive"


def test_reactive_match_suppresses_mirror():
    s = fresh()
    gid = pl.ensure_group(s, "Youtube")
    pl.install_reactive(s, key(), gid)
    d = pl.process_packet(s, pkt(1, key(), 1000))
    assert d.output_ports == {PORT_OUT} and d.matched_table == "reactive"
    e = s.reactive_table[key()]
    assert (e.byte_count, e.packet_count, e.last_matched) == (1000, 1, 1.0)
    assert s.group_table[gid].byte_count == 1000


def test_other_protocol_takes_default_path():
    d = pl.process_packet(fresh(), pkt(0, key(proto=OTHER)))
    assert d.output_ports == {PORT_OUT} and d.matched_table == "default"


def test_install_fresh_duplicate_and_full():
    s = fresh(capacity=1)
    gid = pl.ensure_group(s, "Unknown")
    e = pl.install_reactive(s, key(1), gid)
    assert (e.byte_count, e.packet_count) == (0, 0)
    assert e.idle_timeout == 60.0
    with pytest.raises(pl.DuplicateEntry):
        pl.install_reactive(s, key(1), gid)
    with pytest.raises(pl.TableFull):
        pl.install_reactive(s, key(2), gid)
    with pytest.raises(pl.UnknownGroup):
        pl.install_reactive(fresh(), key(3), 99)


def test_ensure_group_idempotent_and_dynamic():
    s = fresh()
    a = pl.ensure_group(s, "Youtube")
    assert pl.ensure_group(s, "Youtube") == a
    n = len(s.group_table)
    t = pl.ensure_group(s, "Twitch")
    assert len(s.group_table) == n + 1 and t != a
    pl.install_reactive(s, key(), t)


def test_expire_idle_boundary():
    s = fresh()
    gid = pl.ensure_group(s, "x")
    pl.install_reactive(s, key(), gid, now=10.0)
    assert pl.expire_idle(s, 70.0) == []
    assert pl.expire_idle(s, 71.0) == [key()]
    assert s.group_table  # groups are never removed


def test_expire_idle_sorted_against_linear_scan():
    s = fresh()
    gid = pl.ensure_group(s, "x")
    keys = [key(i) for i in (9, 3, 7, 1)]
    for i, k in enumerate(keys):
        pl.install_reactive(s, k, gid, now=float(i))
    oracle = []
    for k in sorted(s.reactive_table, key=lambda k: tuple(int(p) for p in k.src_ip.split("."))):
        if 100.0 - s.reactive_table[k].last_matched > 60.0:
            oracle.append(k)
    assert pl.expire_idle(s, 100.0) == oracle
    assert len(oracle) == 4


def test_poll_empty_table():
    s = fresh()
    pl.ensure_group(s, "Youtube")
    snap = pl.poll_counters(s)
    assert snap.flows == [] and snap.groups == [("Youtube", 0)]


def test_poll_sums_fed_bytes(rng):
    s = fresh()
    gid = pl.ensure_group(s, "g")
    sizes = {key(i): rng.integers(1, 1501, 50) for i in range(3)}
    for k in sizes:
        pl.install_reactive(s, k, gid, 0.0)
    t = 0.0
    for j in range(50):
        for k, b in sizes.items():
            t += 0.01
            pl.process_packet(s, pkt(t, k, int(b[j])))
    snap = dict((k, b) for k, b, _ in pl.poll_counters(s).flows)
    assert snap == {k: int(b.sum()) for k, b in sizes.items()}


def test_poll_chunking_6000():
    s = fresh()
    gid = pl.ensure_group(s, "g")
    for i in range(6000):
        pl.install_reactive(s, FlowKey.make("198.51.100.1", "10.0.0.2", 443, 1024 + i, TCP), gid)
    assert [len(c) for c in pl.poll_counters(s).chunks()] == [2500, 2500, 1000]


def test_non_monotone_clock_rejected():
    s = fresh()
    pl.process_packet(s, pkt(5, key()))
    with pytest.raises(ValueError):
        pl.process_packet(s, pkt(4, key()))


def test_to_dict_serializable():
    import json
    s = fresh()
    pl.install_reactive(s, key(), pl.ensure_group(s, "Netflix"))
    d = json.loads(json.dumps(s.to_dict()))
    assert d["reactive_table"][0]["key"][0] == "203.0.113.1"


# randomized traces: (flow index, gap, bytes) plus install decisions

events = st.lists(
    st.tuples(st.integers(0, 5), st.floats(0, 30, allow_nan=False), st.integers(1, 1500), st.booleans()),
    min_size=1, max_size=200,
)


def run_trace(evs):
    s = fresh()
    gid = pl.ensure_group(s, "g")
    t = 0.0
    mirrored = defaultdict(int)
    total = defaultdict(int)
    counted = defaultdict(int)  # bytes in entries removed by expiry
    last_seen = {}
    for i, gap, nbytes, install in evs:
        t += gap
        k = key(i, proto=UDP if i == 5 else TCP)
        before = {k2: e.byte_count for k2, e in s.reactive_table.items()}
        for dead in pl.expire_idle(s, t):
            assert t - last_seen[dead] > 60.0
            counted[dead] += before[dead]
        d = pl.process_packet(s, pkt(t, k, nbytes))
        assert d.output_ports <= {PORT_OUT, PORT_MIRROR}
        total[k] += nbytes
        last_seen[k] = t
        if d.mirrored:
            assert k not in s.reactive_table
            mirrored[k] += nbytes
            if install:
                pl.install_reactive(s, k, gid, t)
    for k, e in s.reactive_table.items():
        counted[k] += e.byte_count
    return s, total, mirrored, counted


@settings(max_examples=150, deadline=None)
@given(events)
def test_property_conservation_and_suppression(evs):
    s, total, mirrored, counted = run_trace(evs)
    for k in total:
        assert mirrored[k] + counted[k] == total[k]
    # group counter equals bytes matched by its entries
    assert s.group_table[1].byte_count == sum(counted.values())


@settings(max_examples=150, deadline=None)
@given(st.lists(st.floats(0, 200, allow_nan=False), min_size=1, max_size=30), st.floats(0, 400, allow_nan=False))
def test_property_timeout_strictness(match_times, now):
    s = fresh()
    gid = pl.ensure_group(s, "g")
    match_times = sorted(match_times)
    now = max(now, match_times[-1])
    for i, t in enumerate(match_times):
        pl.install_reactive(s, key(i), gid, t)
    removed = set(pl.expire_idle(s, now))
    for i, t in enumerate(match_times):
        assert (key(i) in removed) == (now - t > 60.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 12000), st.integers(1, 5000))
def test_property_poll_chunking(n, size):
    snap = pl.CounterSnapshot(0.0, list(range(n)), [])
    chunks = list(snap.chunks(size))
    assert sum(len(c) for c in chunks) == n
    assert all(len(c) == size for c in chunks[:-1])
    assert len(chunks) == -(-n // size)
