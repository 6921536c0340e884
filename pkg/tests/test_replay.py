import gzip
import json

import numpy as np
import pytest

from itele import report, traffgen as tg
from itele.broker import ProviderMap
from itele.replay import Replay
from itele.trace import TraceFormatError, format_record, parse_record, read_trace, read_truth, write_trace, write_truth

from test_broker import providers, single_flow_trace


def test_record_roundtrip():
    tr = tg.generate_trace([tg.StreamSpec("video", 5, 1.0, 3, "Youtube", "low", 4)])
    for p in tr.packets:
        q = parse_record(format_record(p))
        assert (q.timestamp, q.key, q.bytes, q.flow_id, q.count) == (round(p.timestamp, 6), p.key, p.bytes, p.flow_id, p.count)
        assert q.dns_payload == p.dns_payload
        assert q.direction == p.direction


def test_trace_file_roundtrip_plain_and_gz(tmp_path):
    packets = list(tg.StressTrace(1, 1, 2, duration=5))
    for name in ("t.trace", "t.trace.gz"):
        write_trace(packets, tmp_path / name)
        back = list(read_trace(tmp_path / name))
        assert [(p.timestamp, p.key, p.bytes, p.count) for p in back] == \
               [(p.timestamp, p.key, p.bytes, p.count) for p in packets]
    with gzip.open(tmp_path / "t.trace.gz", "rt") as fh:
        assert fh.readline().startswith("#itele-trace/1")


@pytest.mark.parametrize("body", ["1.0 0 1.2.3.4 5.6.7.8 443 1000 6\n",
                                  "1.0 0 1.2.3.4 5.6.7.8 443 1000 6 0\n",
                                  "2.0 0 1.2.3.4 5.6.7.8 443 1000 6 10\n1.0 0 1.2.3.4 5.6.7.8 443 1000 6 10\n",
                                  "1.0 0 1.2.3.4 5.6.7.8 443 1000 6 10 weird\n"])
def test_malformed_trace(tmp_path, body):
    f = tmp_path / "bad.trace"
    f.write_text("#itele-trace/1 start=0\n" + body)
    with pytest.raises(TraceFormatError):
        list(read_trace(f))


def test_truth_roundtrip(tmp_path):
    truth = {1: tg.FlowTruth("video", "high", "Youtube"), 2: tg.FlowTruth("download", None, "Unknown")}
    write_truth(truth, tmp_path / "t")
    assert read_truth(tmp_path / "t") == truth


def test_mice_only_installs_nothing():
    specs = [tg.StreamSpec("app_mice", 60, 1.0 + i, 100 + i, flow_id=i + 1) for i in range(20)]
    r = Replay(providers()).run(tg.generate_trace(specs).packets)
    assert r.broker.installs == [] and r.stats.max_entries == 0


def test_byte_conservation_small_replay():
    specs = [tg.StreamSpec("video", 100, 1.0, 7, "Netflix", "ultrahigh", 1),
             tg.StreamSpec("download", 100, 1.3, 8, flow_id=2)]
    tr = tg.generate_trace(specs)
    r = Replay(providers()).run(tr.packets)
    data = {fid: sum(p.bytes for p in tr.packets if p.flow_id == fid and p.dns_payload is None) for fid in (1, 2)}
    polled = {s.flow_id: s.total_bytes for s in r.broker.all_series()}
    assert polled == data
    assert r.stats.total_bytes == sum(p.bytes for p in tr.packets)


def test_report_tables(tmp_path, small_models):
    specs = [tg.StreamSpec("video", 128, 1.0 + i, 60 + i, p, res, i + 1)
             for i, (p, res) in enumerate([("Youtube", "low"), ("Netflix", "high"), ("Twitch", "medium")])]
    tr = tg.generate_trace(specs)
    r = Replay(providers(), small_models).run(tr.packets)
    summary = report.write_bundle(r, tmp_path, tr.truth)
    assert summary["reported_flows"] == summary["truth_flows"] == 3
    assert json.loads((tmp_path / "summary.json").read_text())["reactive_installs"] == 3
    tables = report.analytics(report.read_verdict_log(tmp_path / "verdicts.tsv"))
    for name in ("change_ccdf", "duration_ccdf", "rate_ccdf"):
        ps = [p for _, p in tables[name]]
        assert ps == sorted(ps, reverse=True)
    for row in tables["resolution_per_hour"]:
        assert sum(row[1:]) == pytest.approx(1.0)


def log_entry(stream, t, provider="Youtube", video=True, res="low", change=False, start=0.0, nbytes=1000):
    return {"time": t, "stream": stream, "flow_id": 0, "provider": provider, "is_video": video,
            "resolution": res if video else None, "change": change, "start_time": start, "bytes": nbytes}


def test_provider_share_counting():
    log = [log_entry(("s", i), 16.0, "Youtube" if i < 44 else "Other") for i in range(100)]
    assert dict(report.analytics(log)["provider_share"])["Youtube"] == pytest.approx(0.44)


def test_changes_normalized_per_hour():
    log = [log_entry("s", 0.0, change=False)] + [log_entry("s", t, change=True) for t in (600.0, 1200.0, 1800.0)]
    assert report.analytics(log)["change_ccdf"] == [(6.0, 0.0)]


def test_ccdf_definition():
    assert report.ccdf([1, 2, 2, 3]) == [(1.0, 0.75), (2.0, 0.25), (3.0, 0.0)]
    assert report.ccdf([]) == []


def test_empty_log(tmp_path):
    f = tmp_path / "v.tsv"
    f.write_text("\t".join(report.VERDICT_FIELDS) + "\n")
    with pytest.raises(report.EmptyLog):
        report.read_verdict_log(f)
