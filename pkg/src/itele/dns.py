"""Minimal DNS message codec: enough to build and read A-record responses."""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field

TYPE_A = 1
TYPE_CNAME = 5
TYPE_AAAA = 28
CLASS_IN = 1

_HEADER = struct.Struct("!HHHHHH")
_RR_FIXED = struct.Struct("!HHIH")


class DnsError(Exception):
    pass


class MalformedDns(DnsError):
    pass


class NoARecords(DnsError):
    pass


@dataclass(frozen=True)
class DnsReply:
    query_name: str
    answer_ips: tuple
    timestamp: float = 0.0

    def __post_init__(self):
        if not self.answer_ips:
            raise ValueError("DnsReply needs at least one answer address")
        object.__setattr__(self, "query_name", normalize_name(self.query_name))
        object.__setattr__(self, "answer_ips", tuple(str(ipaddress.IPv4Address(ip)) for ip in self.answer_ips))


@dataclass
class ResourceRecord:
    name: str
    rtype: int
    rdata: bytes | str
    ttl: int = 300


def normalize_name(name: str) -> str:
    return name.rstrip(".").lower()


def _encode_name(name: str) -> bytes:
    name = name.rstrip(".")
    out = bytearray()
    if name:
        for label in name.split("."):
            raw = label.encode("ascii")
            if not 0 < len(raw) < 64:
                raise ValueError(f"bad label length in {name!r}")
            out.append(len(raw))
            out += raw
    out.append(0)
    if len(out) > 255:
        raise ValueError(f"name too long: {name!r}")
    return bytes(out)


def _rdata(rr: ResourceRecord) -> bytes:
    if rr.rtype == TYPE_A:
        return ipaddress.IPv4Address(rr.rdata).packed
    if rr.rtype == TYPE_AAAA:
        return ipaddress.IPv6Address(rr.rdata).packed
    if rr.rtype == TYPE_CNAME:
        return _encode_name(rr.rdata)
    return bytes(rr.rdata)


def encode_response(query_name: str, answers: list, txid: int = 0, qtype: int = TYPE_A) -> bytes:
    """Encode a standard response (QR=1, RD, RA, NOERROR) without name
    compression. ``answers`` is a list of ResourceRecord."""
    msg = bytearray(_HEADER.pack(txid, 0x8180, 1, len(answers), 0, 0))
    msg += _encode_name(query_name) + struct.pack("!HH", qtype, CLASS_IN)
    for rr in answers:
        data = _rdata(rr)
        msg += _encode_name(rr.name) + _RR_FIXED.pack(rr.rtype, CLASS_IN, rr.ttl, len(data)) + data
    return bytes(msg)


def encode_a_reply(name: str, ips, txid: int = 0) -> bytes:
    return encode_response(name, [ResourceRecord(name, TYPE_A, ip) for ip in ips], txid)


def _read_name(buf: bytes, offset: int) -> tuple[str, int]:
    """Decode a possibly compressed name; returns (name, offset after it)."""
    labels = []
    end = None
    jumps = 0
    while True:
        if offset >= len(buf):
            raise MalformedDns("name runs past end of message")
        length = buf[offset]
        if length & 0xC0 == 0xC0:
            if offset + 1 >= len(buf):
                raise MalformedDns("truncated compression pointer")
            if end is None:
                end = offset + 2
            jumps += 1
            if jumps > 64:
                raise MalformedDns("compression loop")
            offset = ((length & 0x3F) << 8) | buf[offset + 1]
            continue
        if length & 0xC0:
            raise MalformedDns("reserved label type")
        offset += 1
        if length == 0:
            break
        if offset + length > len(buf):
            raise MalformedDns("label runs past end of message")
        try:
            labels.append(buf[offset:offset + length].decode("ascii"))
        except UnicodeDecodeError as exc:
            raise MalformedDns("non-ascii label") from exc
        offset += length
    return ".".join(labels), (end if end is not None else offset)


def parse_dns_reply(payload: bytes, timestamp: float = 0.0) -> DnsReply:
    """Extract the question name and every A-record address of a response.

    CNAME, AAAA and other answer types are skipped. Raises MalformedDns when
    the message cannot be decoded or is not a response, NoARecords when the
    answer section holds no A record.
    """
    if len(payload) < _HEADER.size:
        raise MalformedDns("message shorter than header")
    _, flags, qdcount, ancount, _, _ = _HEADER.unpack_from(payload, 0)
    if not flags & 0x8000:
        raise MalformedDns("not a response (QR=0)")
    if qdcount < 1:
        raise MalformedDns("no question section")
    offset = _HEADER.size
    qname = None
    for _ in range(qdcount):
        name, offset = _read_name(payload, offset)
        if offset + 4 > len(payload):
            raise MalformedDns("truncated question")
        offset += 4
        if qname is None:
            qname = name
    ips = []
    for _ in range(ancount):
        _, offset = _read_name(payload, offset)
        if offset + _RR_FIXED.size > len(payload):
            raise MalformedDns("truncated resource record")
        rtype, rclass, _, rdlen = _RR_FIXED.unpack_from(payload, offset)
        offset += _RR_FIXED.size
        if offset + rdlen > len(payload):
            raise MalformedDns("rdata runs past end of message")
        if rtype == TYPE_A and rclass == CLASS_IN:
            if rdlen != 4:
                raise MalformedDns("A record with rdlength != 4")
            ips.append(str(ipaddress.IPv4Address(payload[offset:offset + 4])))
        offset += rdlen
    if not ips:
        raise NoARecords(qname)
    return DnsReply(qname, tuple(ips), timestamp)
