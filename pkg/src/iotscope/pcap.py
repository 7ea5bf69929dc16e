"""Classic libpcap reading and writing for Ethernet/IPv4 captures.

Only the pieces the flow meter needs are decoded: IPv4 addressing, the
TCP/UDP ports, TCP flags and window, header sizes and (for UDP) the
transport payload so DNS questions can be inspected later.
"""

import enum
import socket
import struct
from dataclasses import dataclass, field

from .exceptions import MalformedPcap, UnsupportedLinkType

MAGIC_US = 0xA1B2C3D4
MAGIC_NS = 0xA1B23C4D
LINKTYPE_ETHERNET = 1

ETH_P_IP = 0x0800
ETH_P_8021Q = 0x8100

IPPROTO_TCP = 6
IPPROTO_UDP = 17


class Protocol(enum.Enum):
    TCP = "TCP"
    UDP = "UDP"
    OTHER = "OTHER"


class TcpFlags(enum.IntFlag):
    FIN = 0x01
    SYN = 0x02
    RST = 0x04
    PSH = 0x08
    ACK = 0x10
    URG = 0x20
    ECE = 0x40
    CWR = 0x80


NO_FLAGS = TcpFlags(0)


@dataclass(frozen=True)
class PacketRecord:
    timestamp_us: int
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: Protocol
    ip_total_len: int
    header_len: int
    tcp_flags: TcpFlags = NO_FLAGS
    tcp_window: int = 0
    l4_payload: bytes = b""

    @property
    def payload_len(self):
        return self.ip_total_len - self.header_len


@dataclass
class PacketCapture:
    """Decoded packets of one pcap file plus the count of skipped frames."""

    packets: list = field(default_factory=list)
    skipped: int = 0

    def __len__(self):
        return len(self.packets)

    def __iter__(self):
        return iter(self.packets)

    def __getitem__(self, idx):
        return self.packets[idx]


def _decode_frame(ts_us, frame):
    """Return a PacketRecord, or None when the frame is not decodable IPv4."""
    if len(frame) < 14:
        return None
    ethertype = struct.unpack_from("!H", frame, 12)[0]
    offset = 14
    if ethertype == ETH_P_8021Q:
        if len(frame) < 18:
            return None
        ethertype = struct.unpack_from("!H", frame, 16)[0]
        offset = 18
    if ethertype != ETH_P_IP:
        return None
    ip = frame[offset:]
    if len(ip) < 20 or ip[0] >> 4 != 4:
        return None
    ihl = (ip[0] & 0x0F) * 4
    if ihl < 20 or len(ip) < ihl:
        return None
    total_len, frag = struct.unpack_from("!H2xH", ip, 2)
    if frag & 0x1FFF:
        # non-first fragment: no transport header to read
        return None
    proto = ip[9]
    src_ip = socket.inet_ntoa(ip[12:16])
    dst_ip = socket.inet_ntoa(ip[16:20])
    l4 = ip[ihl:total_len] if total_len >= ihl else b""

    if proto == IPPROTO_TCP:
        if len(l4) < 20:
            return None
        sport, dport, off_flags, flags, window = struct.unpack_from("!HH8xBBH", l4, 0)
        thl = (off_flags >> 4) * 4
        if thl < 20:
            return None
        return PacketRecord(ts_us, src_ip, dst_ip, sport, dport, Protocol.TCP,
                            total_len, ihl + thl, TcpFlags(flags), window)
    if proto == IPPROTO_UDP:
        if len(l4) < 8:
            return None
        sport, dport = struct.unpack_from("!HH", l4, 0)
        return PacketRecord(ts_us, src_ip, dst_ip, sport, dport, Protocol.UDP,
                            total_len, ihl + 8, NO_FLAGS, 0, bytes(l4[8:]))
    return PacketRecord(ts_us, src_ip, dst_ip, 0, 0, Protocol.OTHER, total_len, ihl)


def read_pcap(path):
    """Decode a classic pcap file into a :class:`PacketCapture`.

    Non-IPv4 frames, non-first IP fragments and frames too short to hold
    their transport header are skipped and counted in ``skipped``.
    Nanosecond timestamps are truncated to microseconds.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 24:
        raise MalformedPcap(f"{path}: truncated global header ({len(data)} bytes)")

    magic_le = struct.unpack_from("<I", data, 0)[0]
    for endian in ("<", ">"):
        magic = struct.unpack_from(endian + "I", data, 0)[0]
        if magic in (MAGIC_US, MAGIC_NS):
            break
    else:
        raise MalformedPcap(f"{path}: bad magic 0x{magic_le:08x}")
    nanos = magic == MAGIC_NS
    linktype = struct.unpack_from(endian + "I", data, 20)[0]
    if linktype != LINKTYPE_ETHERNET:
        raise UnsupportedLinkType(f"{path}: link type {linktype} is not Ethernet")

    rec_hdr = struct.Struct(endian + "IIII")
    capture = PacketCapture()
    pos = 24
    end = len(data)
    while pos < end:
        if pos + 16 > end:
            raise MalformedPcap(f"{path}: truncated record header at offset {pos}")
        sec, frac, caplen, _ = rec_hdr.unpack_from(data, pos)
        pos += 16
        if pos + caplen > end:
            raise MalformedPcap(f"{path}: truncated record data at offset {pos}")
        frame = data[pos:pos + caplen]
        pos += caplen
        ts_us = sec * 1_000_000 + (frac // 1000 if nanos else frac)
        rec = _decode_frame(ts_us, frame)
        if rec is None:
            capture.skipped += 1
        else:
            capture.packets.append(rec)
    return capture


# --- writing -------------------------------------------------------------

def _checksum(header):
    if len(header) % 2:
        header += b"\x00"
    s = sum(struct.unpack(f"!{len(header) // 2}H", header))
    while s >> 16:
        s = (s & 0xFFFF) + (s >> 16)
    return ~s & 0xFFFF


def ipv4_frame(src_ip, dst_ip, proto, l4_bytes, ident=0,
               src_mac=b"\x02\x00\x00\x00\x00\x01", dst_mac=b"\x02\x00\x00\x00\x00\x02"):
    """Wrap a transport segment in IPv4 and Ethernet headers."""
    total_len = 20 + len(l4_bytes)
    hdr = struct.pack("!BBHHHBBH4s4s", 0x45, 0, total_len, ident & 0xFFFF, 0x4000,
                      64, proto, 0, socket.inet_aton(src_ip), socket.inet_aton(dst_ip))
    hdr = hdr[:10] + struct.pack("!H", _checksum(hdr)) + hdr[12:]
    return dst_mac + src_mac + struct.pack("!H", ETH_P_IP) + hdr + l4_bytes


def tcp_segment(sport, dport, flags, window=65535, payload=b"", seq=0, ack=0):
    return struct.pack("!HHIIBBHHH", sport, dport, seq, ack, 5 << 4, int(flags),
                       window, 0, 0) + payload


def udp_datagram(sport, dport, payload=b""):
    return struct.pack("!HHHH", sport, dport, 8 + len(payload), 0) + payload


def tcp_frame(src_ip, dst_ip, sport, dport, flags, window=65535, payload=b"", **kw):
    return ipv4_frame(src_ip, dst_ip, IPPROTO_TCP,
                      tcp_segment(sport, dport, flags, window, payload), **kw)


def udp_frame(src_ip, dst_ip, sport, dport, payload=b"", **kw):
    return ipv4_frame(src_ip, dst_ip, IPPROTO_UDP, udp_datagram(sport, dport, payload), **kw)


def arp_frame():
    body = struct.pack("!HHBBH6s4s6s4s", 1, ETH_P_IP, 6, 4, 1, b"\x02" * 6,
                       socket.inet_aton("10.0.0.1"), b"\x00" * 6, socket.inet_aton("10.0.0.2"))
    return b"\xff" * 6 + b"\x02" * 6 + struct.pack("!H", 0x0806) + body


class PcapWriter:
    """Streaming writer for little-endian microsecond pcap files."""

    def __init__(self, fh, snaplen=65535, linktype=LINKTYPE_ETHERNET):
        self.fh = fh
        fh.write(struct.pack("<IHHiIII", MAGIC_US, 2, 4, 0, 0, snaplen, linktype))

    def write(self, ts_us, frame):
        sec, usec = divmod(int(ts_us), 1_000_000)
        self.fh.write(struct.pack("<IIII", sec, usec, len(frame), len(frame)))
        self.fh.write(frame)


def write_pcap(path, frames):
    """Write ``(timestamp_us, frame_bytes)`` pairs to ``path``."""
    with open(path, "wb") as fh:
        writer = PcapWriter(fh)
        for ts_us, frame in frames:
            writer.write(ts_us, frame)
