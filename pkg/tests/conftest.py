import socket
import struct

import pytest

from iotscope.pcap import PacketRecord, Protocol, TcpFlags

ACCEPTANCE_LINES = []


def record_acceptance(name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" -- {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def pkt(t_us, src="10.0.0.1", dst="203.0.113.5", sport=40000, dport=443, proto=Protocol.TCP,
        length=100, header=40, flags=TcpFlags.ACK, window=1000, payload=b""):
    if proto is not Protocol.TCP:
        flags, window = TcpFlags(0), 0
    return PacketRecord(t_us, src, dst, sport, dport, proto, length, header, TcpFlags(flags),
                        window, payload)


def reverse(p, t_us=None, **kw):
    fields = dict(src=p.dst_ip, dst=p.src_ip, sport=p.dst_port, dport=p.src_port,
                  proto=p.protocol, length=p.ip_total_len, header=p.header_len,
                  flags=p.tcp_flags, window=p.tcp_window, payload=p.l4_payload)
    fields.update(kw)
    return pkt(p.timestamp_us if t_us is None else t_us, **fields)


# --- raw pcap bytes, built without the package writer ---------------------

def raw_global_header(magic=0xA1B2C3D4, linktype=1, endian="<"):
    return struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype)


def raw_record(ts_sec, ts_frac, frame, endian="<"):
    return struct.pack(endian + "IIII", ts_sec, ts_frac, len(frame), len(frame)) + frame


def raw_eth(ethertype, body):
    macs = b"\x00\x11\x22\x33\x44\x55" + b"\x66\x77\x88\x99\xaa\xbb"
    return macs + struct.pack("!H", ethertype) + body


def raw_ipv4(src, dst, proto, l4, frag_offset=0, more_fragments=False):
    flags_frag = (0x2000 if more_fragments else 0) | frag_offset
    return struct.pack("!BBHHHBBH4s4s", 0x45, 0, 20 + len(l4), 1, flags_frag, 64, proto, 0,
                       socket.inet_aton(src), socket.inet_aton(dst)) + l4


def raw_tcp(sport, dport, flags, window, payload=b""):
    return struct.pack("!HHIIBBHHH", sport, dport, 1, 0, 0x50, flags, window, 0, 0) + payload


def raw_udp(sport, dport, payload=b""):
    return struct.pack("!HHHH", sport, dport, 8 + len(payload), 0) + payload


@pytest.fixture
def handshake_pcap(tmp_path):
    """Three-packet TCP handshake 10.0.0.1:40000 <-> 203.0.113.5:443."""
    a, b = "10.0.0.1", "203.0.113.5"
    frames = [
        raw_eth(0x0800, raw_ipv4(a, b, 6, raw_tcp(40000, 443, 0x02, 64240))),
        raw_eth(0x0800, raw_ipv4(b, a, 6, raw_tcp(443, 40000, 0x12, 65535))),
        raw_eth(0x0800, raw_ipv4(a, b, 6, raw_tcp(40000, 443, 0x10, 64240))),
    ]
    data = raw_global_header()
    for i, f in enumerate(frames):
        data += raw_record(1_700_000_000, 1000 * i, f)
    path = tmp_path / "handshake.pcap"
    path.write_bytes(data)
    return path


@pytest.fixture
def empty_pcap(tmp_path):
    path = tmp_path / "empty.pcap"
    path.write_bytes(raw_global_header())
    return path
