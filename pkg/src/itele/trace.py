"""Line-oriented trace and truth-sidecar files.

Trace: a version header, then one record per line::

    timestamp flow_id src_ip dst_ip src_port dst_port proto bytes [pkts=N] [dns:name=ip,ip,...]

``pkts=N`` marks an aggregate record standing for N wire packets. Files whose
name ends in ``.gz`` are gzip-compressed.
"""

from __future__ import annotations

import gzip
import io
from typing import Iterable, Iterator

from .dns import DnsReply
from .pipeline import Direction, FlowKey, PacketRecord
from .traffgen import FlowTruth

TRACE_VERSION = "itele-trace/1"


class TraceFormatError(ValueError):
    pass


def _open(path, mode):
    if str(path).endswith(".gz"):
        # mtime=0 keeps compressed output byte-identical across runs
        if "w" in mode:
            return io.TextIOWrapper(gzip.GzipFile(path, mode="wb", mtime=0))
        return gzip.open(path, "rt")
    return open(path, mode)


def format_record(p: PacketRecord) -> str:
    k = p.key
    line = f"{p.timestamp:.6f} {p.flow_id} {k.src_ip} {k.dst_ip} {k.src_port} {k.dst_port} {k.proto} {p.bytes}"
    if p.count != 1:
        line += f" pkts={p.count}"
    if p.dns_payload is not None:
        line += f" dns:{p.dns_payload.query_name}={','.join(p.dns_payload.answer_ips)}"
    return line


def _direction(key: FlowKey) -> Direction:
    # servers sit on the lower port
    return Direction.DOWNSTREAM if key.src_port <= key.dst_port else Direction.UPSTREAM


def parse_record(line: str, lineno: int = 0) -> PacketRecord:
    parts = line.split()
    if len(parts) < 8:
        raise TraceFormatError(f"line {lineno}: expected at least 8 fields")
    try:
        ts = float(parts[0])
        flow_id = int(parts[1])
        key = FlowKey.make(parts[2], parts[3], int(parts[4]), int(parts[5]), int(parts[6]))
        nbytes = int(parts[7])
        count, dns = 1, None
        for extra in parts[8:]:
            if extra.startswith("pkts="):
                count = int(extra[5:])
            elif extra.startswith("dns:"):
                name, _, ips = extra[4:].partition("=")
                dns = DnsReply(name, tuple(ips.split(",")), ts)
            else:
                raise ValueError(f"unknown field {extra!r}")
        return PacketRecord(ts, key, nbytes, _direction(key), dns, flow_id, count)
    except (ValueError, IndexError) as exc:
        raise TraceFormatError(f"line {lineno}: {exc}") from None


def write_trace(packets: Iterable, path, start_epoch: float = 0.0) -> int:
    n = 0
    with _open(path, "w") as fh:
        fh.write(f"#{TRACE_VERSION} start={start_epoch:.6f}\n")
        buf = []
        for p in packets:
            buf.append(format_record(p))
            n += 1
            if len(buf) >= 65536:
                fh.write("\n".join(buf) + "\n")
                buf.clear()
        if buf:
            fh.write("\n".join(buf) + "\n")
    return n


def read_trace(path) -> Iterator[PacketRecord]:
    """Stream records, checking the header and timestamp order."""
    with _open(path, "r") as fh:
        header = fh.readline().strip()
        if not header.startswith("#" + TRACE_VERSION):
            raise TraceFormatError(f"{path}: missing or unsupported version header")
        last = float("-inf")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rec = parse_record(line, lineno)
            if rec.timestamp < last:
                raise TraceFormatError(f"line {lineno}: timestamp goes backwards")
            last = rec.timestamp
            yield rec


def write_truth(truth: dict, path) -> None:
    with open(path, "w") as fh:
        for fid in sorted(truth):
            t = truth[fid]
            fh.write(f"{fid} {t.kind} {t.resolution or '-'} {t.provider}\n")


def read_truth(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise TraceFormatError(f"{path}:{lineno}: expected 'flow_id kind resolution provider'")
            out[int(parts[0])] = FlowTruth(parts[1], None if parts[2] == "-" else parts[2], parts[3])
    return out
