"""Report bundle: verdict log, telemetry series and campus-style analytics
(provider shares, resolution mix per hour, CCDFs)."""

from __future__ import annotations

import csv
import json
import os
from collections import Counter, defaultdict

import numpy as np

VERDICT_FIELDS = ("time", "flow_id", "src_ip", "dst_ip", "src_port", "dst_port", "proto", "provider",
                  "is_video", "resolution", "change", "start_time", "bytes")


class EmptyLog(ValueError):
    pass


def ccdf(values) -> list:
    """(x, P(X > x)) at each distinct observed value."""
    v = np.sort(np.asarray(values, dtype=float))
    if len(v) == 0:
        return []
    xs = np.unique(v)
    n = len(v)
    return [(float(x), float(n - np.searchsorted(v, x, side="right")) / n) for x in xs]


def write_tsv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def verdict_rows(records) -> list:
    rows = []
    for r in records:
        k = r.key
        rows.append([f"{r.time:.3f}", r.flow_id, k.src_ip, k.dst_ip, k.src_port, k.dst_port, k.proto, r.provider,
                     int(r.is_video), r.resolution or "-", int(r.change), f"{r.start_time:.6f}", r.bytes])
    return rows


def read_verdict_log(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if reader.fieldnames is None or not set(VERDICT_FIELDS) <= set(reader.fieldnames):
            raise EmptyLog(f"{path}: not a verdict log")
        out = []
        for row in reader:
            out.append({
                "time": float(row["time"]),
                "stream": (row["src_ip"], row["dst_ip"], row["src_port"], row["dst_port"], row["proto"],
                           row["start_time"]),
                "flow_id": int(row["flow_id"]),
                "provider": row["provider"],
                "is_video": row["is_video"] == "1",
                "resolution": None if row["resolution"] == "-" else row["resolution"],
                "change": row["change"] == "1",
                "start_time": float(row["start_time"]),
                "bytes": int(row["bytes"]),
            })
    if not out:
        raise EmptyLog(f"{path}: no verdicts")
    return out


def analytics(log: list) -> dict:
    """Per-stream aggregation of a verdict log. A stream counts as video when
    the majority of its verdicts say so."""
    if not log:
        raise EmptyLog("no verdicts")
    streams = defaultdict(list)
    for rec in log:
        streams[rec["stream"]].append(rec)
    video = []
    for recs in streams.values():
        recs.sort(key=lambda r: r["time"])
        n_video = sum(r["is_video"] for r in recs)
        if 2 * n_video <= len(recs):
            continue
        start = recs[0]["start_time"]
        end = recs[-1]["time"]
        duration = max(end - start, 1e-9)
        video.append({
            "provider": recs[0]["provider"],
            "duration": duration,
            "mean_rate_mbps": recs[-1]["bytes"] * 8 / duration / 1e6,
            "changes": sum(r["change"] for r in recs),
            "changes_per_hour": sum(r["change"] for r in recs) / (duration / 3600.0),
        })
    providers = Counter(s["provider"] for s in video)
    total = sum(providers.values())
    shares = [(p, c / total) for p, c in sorted(providers.items(), key=lambda kv: (-kv[1], kv[0]))] if total else []
    per_hour = defaultdict(Counter)
    for rec in log:
        if rec["is_video"] and rec["resolution"]:
            per_hour[int(rec["time"] // 3600)][rec["resolution"]] += 1
    resolutions = ("low", "medium", "high", "ultrahigh")
    hourly = []
    for hour in sorted(per_hour):
        c = per_hour[hour]
        n = sum(c.values())
        hourly.append((hour, *(c[r] / n for r in resolutions)))
    return {
        "n_streams": len(streams),
        "n_video_streams": len(video),
        "provider_share": shares,
        "resolution_per_hour": hourly,
        "change_ccdf": ccdf([s["changes_per_hour"] for s in video]),
        "duration_ccdf": ccdf([s["duration"] for s in video]),
        "rate_ccdf": ccdf([s["mean_rate_mbps"] for s in video]),
    }


def write_analytics(tables: dict, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_tsv(os.path.join(out_dir, "provider_share.tsv"), ["provider", "share"],
              [(p, f"{s:.4f}") for p, s in tables["provider_share"]])
    write_tsv(os.path.join(out_dir, "resolution_per_hour.tsv"), ["hour", "low", "medium", "high", "ultrahigh"],
              [(h, *(f"{v:.4f}" for v in vals)) for h, *vals in tables["resolution_per_hour"]])
    for name, unit in (("change_ccdf", "changes_per_hour"), ("duration_ccdf", "seconds"), ("rate_ccdf", "mbps")):
        write_tsv(os.path.join(out_dir, f"{name}.tsv"), [unit, "ccdf"],
                  [(f"{x:.6g}", f"{p:.6f}") for x, p in tables[name]])


def write_bundle(replay, out_dir, truth: dict | None = None) -> dict:
    """Write every table of a finished replay into ``out_dir``; returns the
    JSON summary."""
    os.makedirs(out_dir, exist_ok=True)
    broker, stats = replay.broker, replay.stats
    write_tsv(os.path.join(out_dir, "verdicts.tsv"), VERDICT_FIELDS, verdict_rows(broker.verdict_log))
    flows = []
    for s in sorted(broker.all_series(), key=lambda s: (s.start_time, s.key.sort_key())):
        flows.append([s.flow_id, str(s.key), s.provider, f"{s.start_time:.6f}",
                      "-" if s.end_time is None else f"{s.end_time:.3f}", s.total_bytes])
    write_tsv(os.path.join(out_dir, "flows.tsv"), ["flow_id", "key", "provider", "start", "end", "bytes"], flows)
    prov_rows = [(f"{t:.3f}", p, b) for p, series in sorted(broker.provider_series.items()) for t, b in series]
    write_tsv(os.path.join(out_dir, "provider_volume.tsv"), ["time", "provider", "bytes"], prov_rows)
    first, last = replay.first_second or 0, replay.last_second
    write_tsv(os.path.join(out_dir, "load.tsv"), ["second", "link_bytes", "mirror_bytes", "entries", "installs"],
              [(s, stats.link_bytes.get(s, 0), stats.mirror_bytes.get(s, 0), stats.entry_count.get(s, 0),
                stats.installs.get(s, 0)) for s in range(first, last + 1)])
    summary = {
        "packets": stats.packets,
        "bytes": stats.total_bytes,
        "mirrored_bytes": stats.mirrored_total,
        "elephants": stats.elephants,
        "reactive_installs": len(broker.installs),
        "max_entries": stats.max_entries,
        "verdicts": len(broker.verdict_log),
        "polled_bytes": sum(s.total_bytes for s in broker.all_series()),
        "mirror_zero_from": _mirror_zero_from(stats, first, last),
    }
    final = final_verdicts(broker)
    if truth is not None:
        summary["truth_flows"] = len(truth)
        summary["reported_flows"] = len({s.flow_id for s in broker.all_series()})
    summary["final_verdicts"] = [
        {"flow_id": fid, "provider": v[0], "is_video": v[1], "resolution": v[2]} for fid, v in sorted(final.items())
    ]
    if broker.verdict_log:
        tables = analytics(read_log_records(broker.verdict_log))
        write_analytics(tables, out_dir)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def _mirror_zero_from(stats, first, last):
    """First second after which the mirror port stays silent, None if it never does."""
    busy = [s for s, b in stats.mirror_bytes.items() if b > 0]
    if not busy:
        return first
    t = max(busy) + 1
    return t if t <= last else None


def final_verdicts(broker) -> dict:
    out = {}
    for rec in broker.verdict_log:
        out[rec.flow_id] = (rec.provider, rec.is_video, rec.resolution)
    return out


def read_log_records(records) -> list:
    """In-memory verdict records in the shape read_verdict_log returns."""
    return [{
        "time": r.time, "stream": (r.key, r.start_time), "flow_id": r.flow_id, "provider": r.provider,
        "is_video": r.is_video, "resolution": r.resolution, "change": r.change, "start_time": r.start_time,
        "bytes": r.bytes,
    } for r in records]
