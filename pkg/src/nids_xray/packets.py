"""Packet trace ingestion and serialization.

A trace is a time-ordered sequence of :class:`PacketRecord`.  Two
on-disk formats are supported:

* canonical csv with a fixed header (the interchange format every other
  stage consumes), and
* classic pcap (magic ``0xa1b2c3d4``, microsecond resolution, Ethernet
  link layer) for both reading and writing.

Readers normalize addresses, clamp timestamp regressions to keep the
stream non-decreasing, and can attach labels from a column, a benign
prefix length, or a field-match predicate (:class:`LabelSpec`).
"""

from __future__ import annotations

import csv
import ipaddress
import os
import re
import struct
from dataclasses import dataclass, replace

PROTOCOLS = ("TCP", "UDP", "ICMP", "ARP", "OTHER")

# Protocols that carry no transport ports; ports are 0 exactly for these.
PORTLESS = frozenset({"ICMP", "ARP", "OTHER"})

CSV_HEADER = (
    "ts",
    "src_mac",
    "dst_mac",
    "src_ip",
    "dst_ip",
    "proto",
    "src_port",
    "dst_port",
    "frame_len",
    "label",
)

PCAP_MAGIC = 0xA1B2C3D4
_ETH_IPV4 = 0x0800
_ETH_ARP = 0x0806
_ETH_IPV6 = 0x86DD

_MAC_RE = re.compile(r"^[0-9a-f]{2}(:[0-9a-f]{2}){5}$")


class TraceError(Exception):
    """Base error for unreadable or invalid traces."""


class TraceFormatError(TraceError):
    """Malformed file content; message names the offending line or byte offset."""


class LabelSpecError(TraceError):
    """Label specification cannot be parsed or applied."""


@dataclass(slots=True)
class PacketRecord:
    """One captured frame reduced to the fields the feature extractor keys on.

    ``label`` is 0 (benign), 1 (malicious) or None (unknown).  Ports are 0
    exactly when ``proto`` is in :data:`PORTLESS`.
    """

    ts: float
    src_mac: str
    dst_mac: str
    src_ip: str
    dst_ip: str
    proto: str
    src_port: int
    dst_port: int
    frame_len: int
    label: int | None = None


@dataclass(slots=True)
class TraceMeta:
    """Summary emitted alongside a fully-read trace."""

    packet_count: int = 0
    benign_count: int = 0
    malicious_count: int = 0
    unknown_count: int = 0
    first_ts: float | None = None
    last_ts: float | None = None
    out_of_order: int = 0
    source_format: str = ""

    @property
    def duration(self) -> float:
        if self.first_ts is None or self.last_ts is None:
            return 0.0
        return self.last_ts - self.first_ts


@dataclass(frozen=True)
class LabelSpec:
    """How to assign labels while reading a trace.

    kind "column" takes labels from the csv label column; "first-benign"
    marks the first ``benign_count`` packets 0 and the rest 1; "match"
    marks packets 1 when any predicate (a conjunction of field=value
    tests) holds, else 0.
    """

    kind: str
    benign_count: int = 0
    predicates: tuple[tuple[tuple[str, str], ...], ...] = ()

    _MATCH_FIELDS = frozenset(
        {"src_mac", "dst_mac", "src_ip", "dst_ip", "proto", "src_port", "dst_port"}
    )

    @staticmethod
    def column() -> "LabelSpec":
        return LabelSpec(kind="column")

    @staticmethod
    def first_benign(n: int) -> "LabelSpec":
        if n < 0:
            raise LabelSpecError("first-benign count must be >= 0, got %d" % n)
        return LabelSpec(kind="first-benign", benign_count=n)

    @staticmethod
    def matching(*predicates: dict[str, str]) -> "LabelSpec":
        if not predicates:
            raise LabelSpecError("match label spec needs at least one predicate")
        frozen = []
        for pred in predicates:
            if not pred:
                raise LabelSpecError("empty predicate in match label spec")
            for fld in pred:
                if fld not in LabelSpec._MATCH_FIELDS:
                    raise LabelSpecError(
                        "unknown field %r in match label spec (allowed: %s)"
                        % (fld, ", ".join(sorted(LabelSpec._MATCH_FIELDS)))
                    )
            frozen.append(tuple(sorted((k, str(v)) for k, v in pred.items())))
        return LabelSpec(kind="match", predicates=tuple(frozen))

    @staticmethod
    def parse(text: str) -> "LabelSpec":
        """Parse the CLI form: ``column``, ``first-benign=N`` or
        ``match=field:value[,field:value...][|alternative...]``."""
        text = text.strip()
        if text == "column":
            return LabelSpec.column()
        if text.startswith("first-benign="):
            raw = text.split("=", 1)[1]
            try:
                return LabelSpec.first_benign(int(raw))
            except ValueError as exc:
                raise LabelSpecError("bad first-benign count %r" % raw) from exc
        if text.startswith("match="):
            preds = []
            for alt in text.split("=", 1)[1].split("|"):
                pred: dict[str, str] = {}
                for pair in alt.split(","):
                    if ":" not in pair:
                        raise LabelSpecError(
                            "bad match clause %r (expected field:value)" % pair
                        )
                    k, v = pair.split(":", 1)
                    pred[k.strip()] = v.strip()
                preds.append(pred)
            return LabelSpec.matching(*preds)
        raise LabelSpecError(
            "unrecognized label spec %r (use column, first-benign=N or match=...)" % text
        )

    def matches(self, rec: PacketRecord) -> bool:
        for pred in self.predicates:
            if all(str(getattr(rec, fld)) == val for fld, val in pred):
                return True
        return False

    def label_for(self, index: int, rec: PacketRecord) -> int | None:
        if self.kind == "column":
            return rec.label
        if self.kind == "first-benign":
            return 0 if index < self.benign_count else 1
        if self.kind == "match":
            return 1 if self.matches(rec) else 0
        raise LabelSpecError("unknown label spec kind %r" % self.kind)


def _canonical_mac(raw: str, where: str) -> str:
    mac = raw.strip().lower()
    if not _MAC_RE.match(mac):
        raise TraceFormatError("%s: bad MAC address %r" % (where, raw))
    return mac


def _canonical_ip(raw: str, proto: str, where: str) -> str:
    ip = raw.strip()
    if ip == "":
        if proto == "OTHER":
            return ""
        raise TraceFormatError("%s: empty IP address for proto %s" % (where, proto))
    try:
        return str(ipaddress.ip_address(ip))
    except ValueError as exc:
        raise TraceFormatError("%s: bad IP address %r" % (where, raw)) from exc


def _validate_record(rec: PacketRecord, where: str) -> None:
    if rec.proto not in PROTOCOLS:
        raise TraceFormatError("%s: unknown proto %r" % (where, rec.proto))
    portless = rec.proto in PORTLESS
    for name, port in (("src_port", rec.src_port), ("dst_port", rec.dst_port)):
        if not 0 <= port <= 65535:
            raise TraceFormatError("%s: %s out of range: %d" % (where, name, port))
        if portless and port != 0:
            raise TraceFormatError(
                "%s: %s must be 0 for proto %s" % (where, name, rec.proto)
            )
        if not portless and port == 0:
            raise TraceFormatError(
                "%s: %s must be nonzero for proto %s" % (where, name, rec.proto)
            )
    if rec.frame_len < 1:
        raise TraceFormatError("%s: frame_len must be >= 1, got %d" % (where, rec.frame_len))
    if rec.label not in (None, 0, 1):
        raise TraceFormatError("%s: label must be 0, 1 or empty" % where)


def sniff_format(path: str) -> str:
    """Return "pcap" or "csv" by inspecting the first bytes of the file."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if len(head) == 4:
        (magic,) = struct.unpack("<I", head)
        if magic in (PCAP_MAGIC, struct.unpack("<I", struct.pack(">I", PCAP_MAGIC))[0]):
            return "pcap"
    return "csv"


# --------------------------------------------------------------------------
# csv


def _read_csv(path: str):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError("%s: missing csv header" % path) from None
        if tuple(header) != CSV_HEADER:
            raise TraceFormatError(
                "%s: bad csv header %r (expected %s)" % (path, header, ",".join(CSV_HEADER))
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            where = "%s:%d" % (path, lineno)
            if len(row) != len(CSV_HEADER):
                raise TraceFormatError(
                    "%s: expected %d fields, got %d" % (where, len(CSV_HEADER), len(row))
                )
            try:
                ts = float(row[0])
                src_port = int(row[6])
                dst_port = int(row[7])
                frame_len = int(row[8])
            except ValueError as exc:
                raise TraceFormatError("%s: %s" % (where, exc)) from None
            raw_label = row[9].strip()
            if raw_label == "":
                label: int | None = None
            elif raw_label in ("0", "1"):
                label = int(raw_label)
            else:
                raise TraceFormatError("%s: bad label %r" % (where, row[9]))
            proto = row[5].strip()
            rec = PacketRecord(
                ts=ts,
                src_mac=_canonical_mac(row[1], where),
                dst_mac=_canonical_mac(row[2], where),
                src_ip=_canonical_ip(row[3], proto, where),
                dst_ip=_canonical_ip(row[4], proto, where),
                proto=proto,
                src_port=src_port,
                dst_port=dst_port,
                frame_len=frame_len,
                label=label,
            )
            _validate_record(rec, where)
            yield rec


def _format_ts(ts: float) -> str:
    # repr of the builtin float keeps the exact value so csv round-trips
    # bit-for-bit; numpy scalars repr differently, so coerce first
    return repr(float(ts))


def _write_csv(records, path: str) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in records:
            _validate_record(rec, "%s record %d" % (path, n))
            writer.writerow(
                (
                    _format_ts(rec.ts),
                    rec.src_mac,
                    rec.dst_mac,
                    rec.src_ip,
                    rec.dst_ip,
                    rec.proto,
                    str(rec.src_port),
                    str(rec.dst_port),
                    str(rec.frame_len),
                    "" if rec.label is None else str(rec.label),
                )
            )
            n += 1
    return n


# --------------------------------------------------------------------------
# pcap


def _parse_frame(data: bytes) -> tuple[str, str, str, str, str, int, int]:
    """Best-effort Ethernet frame parse.

    Returns (src_mac, dst_mac, src_ip, dst_ip, proto, src_port, dst_port).
    Anything that cannot be decoded degrades to proto OTHER with ports 0.
    """
    if len(data) < 14:
        return ("00:00:00:00:00:00", "00:00:00:00:00:00", "", "", "OTHER", 0, 0)
    dst_mac = data[0:6].hex(":")
    src_mac = data[6:12].hex(":")
    ethertype = struct.unpack_from("!H", data, 12)[0]
    other = (src_mac, dst_mac, "", "", "OTHER", 0, 0)

    if ethertype == _ETH_IPV4:
        if len(data) < 34:
            return other
        ihl = (data[14] & 0x0F) * 4
        if ihl < 20 or len(data) < 14 + ihl:
            return other
        ip_proto = data[23]
        src_ip = str(ipaddress.IPv4Address(data[26:30]))
        dst_ip = str(ipaddress.IPv4Address(data[30:34]))
        off = 14 + ihl
        if ip_proto in (6, 17) and len(data) >= off + 4:
            sport, dport = struct.unpack_from("!HH", data, off)
            name = "TCP" if ip_proto == 6 else "UDP"
            if sport == 0 or dport == 0:
                return (src_mac, dst_mac, src_ip, dst_ip, "OTHER", 0, 0)
            return (src_mac, dst_mac, src_ip, dst_ip, name, sport, dport)
        if ip_proto == 1:
            return (src_mac, dst_mac, src_ip, dst_ip, "ICMP", 0, 0)
        return (src_mac, dst_mac, src_ip, dst_ip, "OTHER", 0, 0)

    if ethertype == _ETH_IPV6:
        if len(data) < 54:
            return other
        next_header = data[20]
        src_ip = str(ipaddress.IPv6Address(data[22:38]))
        dst_ip = str(ipaddress.IPv6Address(data[38:54]))
        if next_header in (6, 17) and len(data) >= 58:
            sport, dport = struct.unpack_from("!HH", data, 54)
            name = "TCP" if next_header == 6 else "UDP"
            if sport == 0 or dport == 0:
                return (src_mac, dst_mac, src_ip, dst_ip, "OTHER", 0, 0)
            return (src_mac, dst_mac, src_ip, dst_ip, name, sport, dport)
        if next_header == 58:
            return (src_mac, dst_mac, src_ip, dst_ip, "ICMP", 0, 0)
        return (src_mac, dst_mac, src_ip, dst_ip, "OTHER", 0, 0)

    if ethertype == _ETH_ARP:
        if len(data) < 42:
            return other
        htype, ptype, hlen, plen = struct.unpack_from("!HHBB", data, 14)
        if htype != 1 or ptype != _ETH_IPV4 or hlen != 6 or plen != 4:
            return other
        # key on the ARP payload addresses, not the Ethernet broadcast
        sender_mac = data[22:28].hex(":")
        sender_ip = str(ipaddress.IPv4Address(data[28:32]))
        target_ip = str(ipaddress.IPv4Address(data[38:42]))
        return (sender_mac, dst_mac, sender_ip, target_ip, "ARP", 0, 0)

    return other


def _read_pcap(path: str):
    with open(path, "rb") as fh:
        head = fh.read(24)
        if len(head) < 24:
            raise TraceFormatError("%s: truncated pcap global header at byte 0" % path)
        (magic,) = struct.unpack("<I", head[0:4])
        if magic == PCAP_MAGIC:
            endian = "<"
        elif struct.unpack(">I", head[0:4])[0] == PCAP_MAGIC:
            endian = ">"
        else:
            raise TraceFormatError(
                "%s: not a classic pcap file (magic 0x%08x at byte 0)" % (path, magic)
            )
        network = struct.unpack(endian + "I", head[20:24])[0]
        if network != 1:
            raise TraceFormatError(
                "%s: unsupported link layer %d (only Ethernet is supported)"
                % (path, network)
            )
        offset = 24
        rec_header = struct.Struct(endian + "IIII")
        while True:
            hdr = fh.read(16)
            if not hdr:
                return
            if len(hdr) < 16:
                raise TraceFormatError(
                    "%s: truncated packet header at byte %d" % (path, offset)
                )
            ts_sec, ts_usec, incl_len, orig_len = rec_header.unpack(hdr)
            data = fh.read(incl_len)
            if len(data) < incl_len:
                raise TraceFormatError(
                    "%s: truncated packet body at byte %d" % (path, offset + 16)
                )
            src_mac, dst_mac, src_ip, dst_ip, proto, sport, dport = _parse_frame(data)
            yield PacketRecord(
                ts=ts_sec + ts_usec * 1e-6,
                src_mac=src_mac,
                dst_mac=dst_mac,
                src_ip=src_ip,
                dst_ip=dst_ip,
                proto=proto,
                src_port=sport,
                dst_port=dport,
                frame_len=max(orig_len, 1),
                label=None,
            )
            offset += 16 + incl_len


def _ip_checksum(header: bytes) -> int:
    total = 0
    for i in range(0, len(header), 2):
        total += (header[i] << 8) + header[i + 1]
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return (~total) & 0xFFFF


def _mac_bytes(mac: str) -> bytes:
    return bytes.fromhex(mac.replace(":", ""))


def _build_frame(rec: PacketRecord, where: str) -> bytes:
    """Synthesize an Ethernet frame that parses back to the same record."""
    eth_src = _mac_bytes(rec.src_mac)
    eth_dst = _mac_bytes(rec.dst_mac)

    if rec.proto == "ARP":
        payload = struct.pack(
            "!HHBBH6s4s6s4s",
            1,
            _ETH_IPV4,
            6,
            4,
            1,
            eth_src,
            ipaddress.IPv4Address(rec.src_ip).packed,
            b"\x00" * 6,
            ipaddress.IPv4Address(rec.dst_ip).packed,
        )
        frame = eth_dst + eth_src + struct.pack("!H", _ETH_ARP) + payload
    elif rec.proto == "OTHER":
        frame = eth_dst + eth_src + struct.pack("!H", 0xFFFF)
    else:
        v6 = ":" in rec.src_ip
        src = ipaddress.ip_address(rec.src_ip).packed
        dst = ipaddress.ip_address(rec.dst_ip).packed
        if rec.proto == "TCP":
            l4 = struct.pack(
                "!HHIIHHHH", rec.src_port, rec.dst_port, 0, 0, 0x5000, 8192, 0, 0
            )
            ip_proto = 6
        elif rec.proto == "UDP":
            l4 = struct.pack("!HHHH", rec.src_port, rec.dst_port, 8, 0)
            ip_proto = 17
        else:  # ICMP
            l4 = struct.pack("!BBHHH", 8, 0, 0, 0, 0)
            ip_proto = 58 if v6 else 1
        if v6:
            ip_header = struct.pack("!IHBB16s16s", 0x60000000, len(l4), ip_proto, 64, src, dst)
            ethertype = _ETH_IPV6
        else:
            ip_header = struct.pack(
                "!BBHHHBBH4s4s", 0x45, 0, 20 + len(l4), 0, 0, 64, ip_proto, 0, src, dst
            )
            checksum = _ip_checksum(ip_header)
            ip_header = ip_header[:10] + struct.pack("!H", checksum) + ip_header[12:]
            ethertype = _ETH_IPV4
        frame = eth_dst + eth_src + struct.pack("!H", ethertype) + ip_header + l4

    if rec.frame_len < len(frame):
        raise TraceError(
            "%s: frame_len %d below the %d-byte minimum for proto %s"
            % (where, rec.frame_len, len(frame), rec.proto)
        )
    return frame + b"\x00" * (rec.frame_len - len(frame))


def _write_pcap(records, path: str) -> int:
    n = 0
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IHHiIII", PCAP_MAGIC, 2, 4, 0, 0, 65535, 1))
        for rec in records:
            where = "%s record %d" % (path, n)
            _validate_record(rec, where)
            frame = _build_frame(rec, where)
            ts_sec = int(rec.ts)
            ts_usec = int(round((rec.ts - ts_sec) * 1e6))
            if ts_usec >= 1_000_000:
                ts_sec += 1
                ts_usec -= 1_000_000
            fh.write(struct.pack("<IIII", ts_sec, ts_usec, len(frame), len(frame)))
            fh.write(frame)
            n += 1
    return n


# --------------------------------------------------------------------------
# public API


def read_trace(
    path: str,
    fmt: str = "auto",
    label_spec: LabelSpec | None = None,
) -> tuple[list[PacketRecord], TraceMeta]:
    """Read a trace file into memory.

    Timestamps are clamped so the returned sequence is non-decreasing;
    the number of clamped packets lands in ``meta.out_of_order``.  When
    ``label_spec`` is None, csv labels come from the label column and
    pcap records stay unlabeled.
    """
    if not os.path.exists(path):
        raise TraceError("trace file not found: %s" % path)
    if fmt == "auto":
        fmt = sniff_format(path)
    if fmt == "csv":
        raw = _read_csv(path)
    elif fmt == "pcap":
        raw = _read_pcap(path)
    else:
        raise TraceError("unknown trace format %r" % fmt)

    if label_spec is not None and label_spec.kind == "column" and fmt == "pcap":
        raise LabelSpecError("pcap input has no label column")

    records: list[PacketRecord] = []
    meta = TraceMeta(source_format=fmt)
    high = float("-inf")
    for idx, rec in enumerate(raw):
        if rec.ts < high:
            rec.ts = high
            meta.out_of_order += 1
        else:
            high = rec.ts
        if label_spec is not None:
            rec.label = label_spec.label_for(idx, rec)
        if rec.label == 0:
            meta.benign_count += 1
        elif rec.label == 1:
            meta.malicious_count += 1
        else:
            meta.unknown_count += 1
        if meta.first_ts is None:
            meta.first_ts = rec.ts
        meta.last_ts = rec.ts
        records.append(rec)
    meta.packet_count = len(records)
    return records, meta


def write_trace(records, path: str, fmt: str = "auto") -> int:
    """Write records to csv or pcap; returns the number written.

    ``fmt="auto"`` picks pcap for a ``.pcap`` suffix and csv otherwise.
    """
    if fmt == "auto":
        fmt = "pcap" if path.endswith(".pcap") else "csv"
    if fmt == "csv":
        return _write_csv(records, path)
    if fmt == "pcap":
        return _write_pcap(records, path)
    raise TraceError("unknown trace format %r" % fmt)


def copy_record(rec: PacketRecord, **changes) -> PacketRecord:
    return replace(rec, **changes)
