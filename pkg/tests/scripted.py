"""Hand-scripted inputs for the IDS checks.

Frames are built with the raw helpers in conftest and DNS messages with
dnspython, so neither depends on the package's own encoders.
"""

import struct

import dns.exception
import dns.flags
import dns.message
import dns.name
import dns.rrset

from conftest import raw_eth, raw_global_header, raw_ipv4, raw_record, raw_tcp, raw_udp

# sids of the shipped example database, written out by hand: IPs then
# patterns for each entry, in file order, starting at 1000000
SID = {
    ("hub-music", "203.0.113.10"): 1000000,
    ("hub-music", "music"): 1000001,
    ("hub-music", "radio"): 1000002,
    ("hub-news", "203.0.113.5"): 1000003,
    ("hub-news", "news"): 1000004,
    ("appliance-remote", "203.0.113.20"): 1000005,
    ("appliance-remote", "203.0.113.21"): 1000006,
    ("appliance-remote", "control"): 1000007,
    ("streaming-tv", "203.0.113.30"): 1000008,
    ("streaming-tv", "tv"): 1000009,
    ("streaming-ui", "203.0.113.31"): 1000010,
    ("streaming-ui", "guide"): 1000011,
    ("energy-lighting", "203.0.113.40"): 1000012,
    ("energy-lighting", "lights"): 1000013,
}


def dns_query(name, rdtype="A", txid=4660):
    msg = dns.message.make_query(name, rdtype)
    msg.id = txid
    return msg.to_wire()


def dns_answer(name):
    q = dns.message.make_query(name, "A")
    r = dns.message.make_response(q)
    r.answer.append(dns.rrset.from_text(name, 60, "IN", "A", "203.0.113.99"))
    return r.to_wire()


def _header(qdcount=1, flags=0x0100, txid=1):
    return struct.pack("!HHHHHH", txid, flags, qdcount, 0, 0, 0)


def _name(*labels):
    return b"".join(bytes([len(l)]) + l for l in labels) + b"\x00"


def dns_payloads():
    """(label, payload) pairs covering well-formed and malformed messages."""
    tail = struct.pack("!HH", 1, 1)
    longest = [b"a" * 63] * 3 + [b"b" * 61]  # 4 * 64 - 2 + 1 = 255 wire bytes
    too_long = [b"a" * 63] * 3 + [b"b" * 62]
    return [
        ("hand_encoded", _header() + bytes.fromhex("046e657773076578616d706c6503636f6d00") + tail),
        ("empty", b""),
        ("response", dns_answer("news.example.com.")),
        ("short_header", _header()[:11]),
        ("no_questions", _header(qdcount=0)),
        ("mixed_case", dns_query("NEWS.Example.COM.")),
        ("single_label", dns_query("localhost.")),
        ("deep", dns_query("a.b.c.d.e.f.g.h.example.com.")),
        ("max_label", _header() + _name(b"x" * 63, b"example", b"org") + tail),
        ("label_64", _header() + b"\x40" + b"y" * 64 + b"\x00" + tail),
        ("name_255", _header() + _name(*longest) + tail),
        ("name_256", _header() + _name(*too_long) + tail),
        ("self_pointer", _header() + b"\xc0\x0c" + tail),
        ("truncated_label", _header() + b"\x07exam"),
        ("aaaa", dns_query("tv.example.com.", "AAAA")),
        ("edns", dns.message.make_query("guide.example.com.", "A", use_edns=0).to_wire()),
        ("root_only", _header() + b"\x00" + tail),
        ("hyphen_digits", dns_query("a-1.b-2.example.")),
        ("http_text", b"GET / HTTP/1.1\r\nHost: news.example.com\r\n\r\n"),
        ("two_questions", _header(qdcount=2) + _name(b"first", b"example") + tail
         + _name(b"second", b"example") + tail),
    ]


def reference_qname(payload):
    """QNAME as decoded by dnspython, under the query-only contract."""
    try:
        msg = dns.message.from_wire(payload, question_only=True)
    except (dns.exception.DNSException, ValueError, IndexError):
        return None
    if msg.flags & dns.flags.QR or not msg.question:
        return None
    name = msg.question[0].name
    if name == dns.name.root:
        return None
    return name.to_text(omit_final_dot=True).lower()


# --- 50-packet scripted capture -----------------------------------------

CLIENT = "192.168.1.50"
RESOLVER = "203.0.113.53"
BASE_SEC = 1_704_067_200


def _tcp(src, dst, sport, dport, flags=0x18):
    return raw_eth(0x0800, raw_ipv4(src, dst, 6, raw_tcp(sport, dport, flags, 1000)))


def _udp(src, dst, sport, dport, payload):
    return raw_eth(0x0800, raw_ipv4(src, dst, 17, raw_udp(sport, dport, payload)))


def alert_script():
    """List of (frame, expected sids). One entry per packet, 50 in total."""
    s = []
    # TCP to and from listed addresses, one alert per packet
    for key in [k for k in SID if k[1].startswith("203.")]:
        ip = key[1]
        s.append((_tcp(CLIENT, ip, 40001, 443, 0x02), [SID[key]]))
        s.append((_tcp(ip, CLIENT, 443, 40001, 0x12), [SID[key]]))
    # UDP to a listed address does not match the tcp rules
    s.append((_udp(CLIENT, "203.0.113.5", 40100, 443, b"quic"), []))
    s.append((_udp(CLIENT, "203.0.113.30", 40101, 5000, b"rtp"), []))
    # TCP to unlisted addresses
    for ip in ("203.0.113.6", "198.51.100.5", "203.0.113.50", "10.0.0.5"):
        s.append((_tcp(CLIENT, ip, 40200, 443), []))
    # DNS queries
    queries = [
        ("music.example.com.", [SID[("hub-music", "music")]]),
        ("radio7.example.net.", [SID[("hub-music", "radio")]]),
        ("radio.example.net.", [SID[("hub-music", "radio")]]),
        ("radio7.example.net.evil.test.", []),
        ("NEWS.EXAMPLE.COM.", [SID[("hub-news", "news")]]),
        ("vacuum-control.example.org.", [SID[("appliance-remote", "control")]]),
        ("aircon-control.example.org.", [SID[("appliance-remote", "control")]]),
        ("fridge-control.example.org.", []),
        ("tv.example.com.", [SID[("streaming-tv", "tv")]]),
        ("smarttv.example.com.", [SID[("streaming-tv", "tv")]]),
        ("guide.example.com.", [SID[("streaming-ui", "guide")]]),
        ("lights.example.net.", [SID[("energy-lighting", "lights")]]),
        ("lightsXexample.net.", []),
        ("weather.example.com.", []),
        ("example.com.", []),
    ]
    for i, (name, sids) in enumerate(queries):
        s.append((_udp(CLIENT, RESOLVER, 41000 + i, 53, dns_query(name)), sids))
    # responses carry the same name but are not queries
    for name in ("music.example.com.", "tv.example.com.", "lights.example.net."):
        s.append((_udp(RESOLVER, CLIENT, 53, 41000, dns_answer(name)), []))
    # a DNS-shaped payload on another port, and DNS over TCP
    s.append((_udp(CLIENT, RESOLVER, 41100, 5353, dns_query("news.example.com.")), []))
    s.append((_tcp(CLIENT, RESOLVER, 41101, 53), []))
    # a UDP query to a listed address fires only the pcre rule
    s.append((_udp(CLIENT, "203.0.113.40", 41102, 53, dns_query("lights.example.net.")),
              [SID[("energy-lighting", "lights")]]))
    # TCP session with a listed address on a non-standard port
    remote = [SID[("appliance-remote", "203.0.113.21")]]
    s.append((_tcp(CLIENT, "203.0.113.21", 40300, 8443), remote))
    s.append((_tcp("203.0.113.21", CLIENT, 8443, 40300, 0x11), remote))
    # a packet between two listed addresses fires both rules
    s.append((_tcp("203.0.113.10", "203.0.113.31", 443, 443),
              [SID[("hub-music", "203.0.113.10")], SID[("streaming-ui", "203.0.113.31")]]))
    s.append((_tcp("203.0.113.40", CLIENT, 443, 40400, 0x04),
              [SID[("energy-lighting", "203.0.113.40")]]))
    s.append((_udp(CLIENT, "203.0.113.10", 41200, 53, dns_query("Guide.Example.Com.")),
              [SID[("streaming-ui", "guide")]]))
    # ICMP echo to a listed address is neither tcp nor udp
    icmp = raw_eth(0x0800, raw_ipv4(CLIENT, "203.0.113.5", 1, b"\x08\x00" + bytes(6)))
    s.append((icmp, []))
    for sport in (40500, 40501, 40502):
        s.append((_tcp(CLIENT, "198.51.100.77", sport, 80), []))
    return s


def write_script_pcap(path):
    """Write the script; returns the expected multiset as sorted (ts_us, sid) pairs."""
    script = alert_script()
    data = raw_global_header()
    expected = []
    for i, (frame, sids) in enumerate(script):
        # two packets share each timestamp so ordering by sid is exercised
        usec = 1000 * (i // 2)
        data += raw_record(BASE_SEC, usec, frame)
        ts = BASE_SEC * 1_000_000 + usec
        expected += [(ts, sid) for sid in sids]
    with open(path, "wb") as fh:
        fh.write(data)
    return len(script), sorted(expected)
