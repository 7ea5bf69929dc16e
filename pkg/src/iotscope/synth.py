"""Seeded synthetic captures emulating the six device-category traffic profiles.

Every capture is a sequence of sessions. Each session is one TCP connection
between a client in 10.0.0.0/8 and the profile's server in 203.0.113.0/24,
preceded by a DNS lookup over UDP. Data packets are laid on a single
timeline starting at 0 with inter-arrival gaps of ``1 / packet_rate_hz``
multiplied by a mean-one log-normal factor of shape ``burstiness`` (no
jitter when burstiness is 0). The timeline is cut into sessions of
``session_length_s``; sessions without data packets are not emitted.

Per session, with ``T`` the first data timestamp and ``L`` the profile's DNS
latency: DNS query at ``T - 4 ms - L``, response at ``T - 4 ms``, SYN,
SYN/ACK and ACK at ``T - 3/2/1 ms``, data packets, then FIN/ACK from the
client 1 ms and from the server 2 ms after the last data packet. Each
session and each lookup use their own client port, so every one of them is
exactly one flow.

The profile numbers are synthetic stand-ins that only encode qualitative
contrasts between categories (e.g. cameras send frequent packets, hubs
sporadic larger ones); they are not measurements of real devices.
"""

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .dataset import CategoryLabel
from .ids import build_dns_query, build_dns_response
from .pcap import TcpFlags, tcp_frame, udp_frame, write_pcap
from .rng import SplitMix64

EPOCH_US = 1_704_067_200 * 1_000_000  # 2024-01-01T00:00:00Z
START_OFFSET_US = 50_000
DNS_SERVER = "203.0.113.53"
MAX_IP_LEN = 1500
MIN_DATA_LEN = 60


class Mode(enum.Enum):
    Passive = "Passive"
    Active = "Active"


@dataclass(frozen=True)
class TrafficProfile:
    category: CategoryLabel
    mode: Mode
    packet_rate_hz: float
    packet_size_mean: float
    packet_size_std: float
    session_length_s: float
    downlink_fraction: float
    burstiness: float
    dns_domains: tuple
    server_ip: str
    server_port: int = 443
    dns_latency_s: float = 0.02

    def __post_init__(self):
        if self.packet_rate_hz <= 0 or self.packet_size_mean <= 0 or self.session_length_s <= 0:
            raise ValueError("rates, sizes and session length must be positive")
        if self.packet_size_std < 0 or self.burstiness < 0:
            raise ValueError("packet_size_std and burstiness must be >= 0")
        if not 0.0 <= self.downlink_fraction <= 1.0:
            raise ValueError("downlink_fraction must lie in [0, 1]")

    @property
    def bytes_per_s(self):
        return self.packet_rate_hz * self.packet_size_mean


def _pair(category, server_ip, domains, latency, server_port, passive, active):
    keys = ("packet_rate_hz", "packet_size_mean", "packet_size_std", "session_length_s",
            "downlink_fraction", "burstiness")
    common = dict(category=category, dns_domains=tuple(domains), server_ip=server_ip,
                  server_port=server_port, dns_latency_s=latency)
    return (
        TrafficProfile(mode=Mode.Passive, **common, **dict(zip(keys, passive))),
        TrafficProfile(mode=Mode.Active, **common, **dict(zip(keys, active))),
    )


def builtin_profiles():
    """Map CategoryLabel -> (Passive, Active) profiles.

    Columns: rate Hz, size mean, size std, session s, downlink fraction,
    burstiness.
    """
    C = CategoryLabel
    return {
        C.Surveillance: _pair(
            C.Surveillance, "203.0.113.60", ["cam-stream.example.com"], 0.012, 554,
            (12.0, 300, 40, 20, 0.90, 0.1),
            (45.0, 800, 150, 20, 0.95, 0.1)),
        C.Hub: _pair(
            C.Hub, "203.0.113.5", ["news.example.com", "music.example.com"], 0.025, 443,
            (0.8, 180, 30, 30, 0.50, 0.6),
            (4.0, 1250, 120, 15, 0.88, 0.6)),
        C.EnergyManagement: _pair(
            C.EnergyManagement, "203.0.113.40", ["lights.example.net"], 0.040, 8883,
            (0.2, 90, 6, 30, 0.50, 0.0),
            (1.5, 140, 15, 10, 0.40, 0.3)),
        C.Appliance: _pair(
            C.Appliance, "203.0.113.20", ["vacuum-control.example.org"], 0.055, 8443,
            (1.0, 350, 40, 30, 0.25, 0.2),
            (8.0, 700, 90, 12, 0.30, 0.5)),
        C.StreamingDevices: _pair(
            C.StreamingDevices, "203.0.113.30", ["tv.example.com", "guide.example.com"],
            0.018, 443,
            (2.5, 650, 120, 30, 0.75, 0.4),
            (70.0, 1350, 80, 30, 0.98, 0.05)),
        C.NonIoT: _pair(
            C.NonIoT, "203.0.113.80", ["www.example.org", "cdn.example.net", "mail.example.com"],
            0.008, 443,
            (3.0, 700, 400, 6, 0.55, 1.5),
            (25.0, 800, 450, 8, 0.60, 2.0)),
    }


@dataclass
class GroundTruth:
    """What the generator put into one capture."""

    category: str
    mode: str
    seed: int
    session_count: int = 0
    data_packets: int = 0
    flows: list = field(default_factory=list)
    queried_domains: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(asdict(self), indent=2) + "\n"


def _data_times_us(profile, duration_s, rng, max_gap_us):
    mean_gap = 1e6 / profile.packet_rate_hz
    b = profile.burstiness
    limit = round(duration_s * 1e6)
    times = []
    t = 0
    while t < limit:
        times.append(t)
        factor = math.exp(b * rng.gauss() - b * b / 2.0) if b > 0 else 1.0
        t += max(1, min(round(mean_gap * factor), max_gap_us))
    return times


def _domain_for_session(domains, i):
    # the first domain is always the most frequently queried
    if i % 2 == 0:
        return domains[0]
    return domains[(i // 2) % len(domains)]


def generate_pcap(profile, duration_s, seed, out, idle_timeout_s=120.0):
    """Write one synthetic capture to ``out`` and return its GroundTruth.

    A sidecar ``<out>.truth.json`` holds the same ground truth.
    """
    if not duration_s > 0:
        raise ValueError("duration_s must be > 0")
    rng = SplitMix64(seed)
    client_ip = f"10.{1 + rng.randbelow(254)}.{rng.randbelow(256)}.{1 + rng.randbelow(254)}"
    # keep every within-session gap well inside the flow idle timeout
    max_gap_us = int(idle_timeout_s * 1e6 / 2)
    times = _data_times_us(profile, duration_s, rng, max_gap_us)

    session_us = round(profile.session_length_s * 1e6)
    sessions = {}
    for t in times:
        sessions.setdefault(t // session_us, []).append(t)

    truth = GroundTruth(profile.category.name, profile.mode.value, seed)
    frames = []
    ident = 0
    latency_us = round(profile.dns_latency_s * 1e6)
    server, sport_srv = profile.server_ip, profile.server_port

    def add(ts, frame_fn, *args, **kw):
        nonlocal ident
        frames.append((ts, len(frames), frame_fn(*args, ident=ident, **kw)))
        ident += 1

    for i, key in enumerate(sorted(sessions)):
        data = [EPOCH_US + START_OFFSET_US + t for t in sessions[key]]
        first, last = data[0], data[-1]
        tcp_port = 40000 + 2 * i
        dns_port = tcp_port + 1

        domain = _domain_for_session(profile.dns_domains, i)
        query = build_dns_query(domain, txid=(seed + i) & 0xFFFF)
        q_ts = first - 4000 - latency_us
        add(q_ts, udp_frame, client_ip, DNS_SERVER, dns_port, 53, query)
        add(first - 4000, udp_frame, DNS_SERVER, client_ip, 53, dns_port,
            build_dns_response(query, server))
        truth.queried_domains.append(domain)
        truth.flows.append({"kind": "dns", "client_port": dns_port, "start_us": q_ts,
                            "packets": 2, "label": profile.category.name})

        add(first - 3000, tcp_frame, client_ip, server, tcp_port, sport_srv, TcpFlags.SYN, 64240)
        add(first - 2000, tcp_frame, server, client_ip, sport_srv, tcp_port,
            TcpFlags.SYN | TcpFlags.ACK, 65535)
        add(first - 1000, tcp_frame, client_ip, server, tcp_port, sport_srv, TcpFlags.ACK, 64240)
        for ts in data:
            size = round(rng.gauss(profile.packet_size_mean, profile.packet_size_std))
            size = min(max(size, MIN_DATA_LEN), MAX_IP_LEN)
            payload = bytes(size - 40)
            flags = TcpFlags.PSH | TcpFlags.ACK
            if rng.random() < profile.downlink_fraction:
                add(ts, tcp_frame, server, client_ip, sport_srv, tcp_port, flags, 65535, payload)
            else:
                add(ts, tcp_frame, client_ip, server, tcp_port, sport_srv, flags, 64240, payload)
        add(last + 1000, tcp_frame, client_ip, server, tcp_port, sport_srv,
            TcpFlags.FIN | TcpFlags.ACK, 64240)
        add(last + 2000, tcp_frame, server, client_ip, sport_srv, tcp_port,
            TcpFlags.FIN | TcpFlags.ACK, 65535)
        truth.flows.append({"kind": "tcp", "client_port": tcp_port, "start_us": first - 3000,
                            "packets": len(data) + 5, "label": profile.category.name})
        truth.data_packets += len(data)

    frames.sort()
    truth.flows.sort(key=lambda f: f["start_us"])
    truth.session_count = len(truth.flows)
    out = Path(out)
    write_pcap(out, [(ts, frame) for ts, _, frame in frames])
    out.with_name(out.name + ".truth.json").write_text(truth.to_json())
    return truth


def capture_seed(seed, index):
    return (int(seed) << 16) + index


def generate_corpus(seed, per_category_captures, out_dir, duration_s=60.0, idle_timeout_s=120.0,
                    profiles=None):
    """Captures for every category and mode plus ``manifest.csv`` (file,label,mode,seed).

    Returns the manifest rows.
    """
    if per_category_captures < 1:
        raise ValueError("per_category_captures must be >= 1")
    profiles = profiles or builtin_profiles()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    index = 0
    for category in CategoryLabel:
        for profile in profiles[category]:
            for j in range(per_category_captures):
                s = capture_seed(seed, index)
                index += 1
                name = f"{category.name}_{profile.mode.value}_{j:02d}.pcap"
                generate_pcap(profile, duration_s, s, out_dir / name, idle_timeout_s)
                rows.append({"file": name, "label": category.name, "mode": profile.mode.value,
                             "seed": s})
    with open(out_dir / "manifest.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["file", "label", "mode", "seed"],
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return rows


def read_manifest(path):
    with open(path, newline="") as fh:
        return [{**row, "seed": int(row["seed"])} for row in csv.DictReader(fh)]
