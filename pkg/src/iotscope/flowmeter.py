"""Bidirectional flow assembly and the 63-column flow feature schema."""

import csv
import enum
import heapq
import io
import math
import socket
from dataclasses import dataclass, field

from .pcap import PacketCapture, Protocol, TcpFlags, read_pcap

FEATURE_NAMES = (
    "flow_duration",
    "flow_bytes_per_s",
    "flow_packets_per_s",
    "flow_iat_mean",
    "flow_iat_std",
    "flow_iat_max",
    "flow_iat_min",
    "fwd_packet_count",
    "bwd_packet_count",
    "fwd_bytes_total",
    "bwd_bytes_total",
    "fwd_packets_per_s",
    "bwd_packets_per_s",
    "fwd_pkt_len_max",
    "fwd_pkt_len_min",
    "fwd_pkt_len_mean",
    "fwd_pkt_len_std",
    "bwd_pkt_len_max",
    "bwd_pkt_len_min",
    "bwd_pkt_len_mean",
    "bwd_pkt_len_std",
    "pkt_len_min",
    "pkt_len_max",
    "pkt_len_mean",
    "pkt_len_std",
    "pkt_len_variance",
    "fwd_header_len",
    "bwd_header_len",
    "fwd_iat_mean",
    "fwd_iat_std",
    "fwd_iat_max",
    "fwd_iat_min",
    "bwd_iat_mean",
    "bwd_iat_std",
    "bwd_iat_max",
    "bwd_iat_min",
    "syn_count",
    "ack_count",
    "fin_count",
    "rst_count",
    "psh_count",
    "urg_count",
    "fwd_bytes_bulk_avg",
    "fwd_packets_bulk_avg",
    "fwd_bulk_rate_avg",
    "bwd_bytes_bulk_avg",
    "bwd_packets_bulk_avg",
    "bwd_bulk_rate_avg",
    "subflow_fwd_packets",
    "subflow_fwd_bytes",
    "subflow_bwd_packets",
    "subflow_bwd_bytes",
    "init_fwd_win_bytes",
    "init_bwd_win_bytes",
    "active_mean",
    "active_std",
    "active_max",
    "active_min",
    "idle_mean",
    "idle_std",
    "idle_max",
    "idle_min",
    "down_up_ratio",
)
N_FEATURES = len(FEATURE_NAMES)
assert N_FEATURES == 63


@dataclass(frozen=True)
class FlowConfig:
    """Timeouts (seconds) and bulk threshold used for flow segmentation."""

    idle_timeout_s: float = 120.0
    activity_timeout_s: float = 5.0
    subflow_gap_s: float = 1.0
    bulk_gap_s: float = 1.0
    bulk_min_packets: int = 4

    def __post_init__(self):
        for name in ("idle_timeout_s", "activity_timeout_s", "subflow_gap_s", "bulk_gap_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.bulk_min_packets < 1:
            raise ValueError("bulk_min_packets must be >= 1")


def _ip_key(ip):
    return socket.inet_aton(ip)


@dataclass(frozen=True, order=True)
class FlowKey:
    endpoint_lo: tuple
    endpoint_hi: tuple
    protocol: str

    @classmethod
    def of(cls, pkt):
        a = (pkt.src_ip, pkt.src_port)
        b = (pkt.dst_ip, pkt.dst_port)
        if (_ip_key(b[0]), b[1]) < (_ip_key(a[0]), a[1]):
            a, b = b, a
        return cls(a, b, pkt.protocol.value)


class Termination(enum.Enum):
    FIN = "FIN"
    RST = "RST"
    IDLE_TIMEOUT = "IDLE_TIMEOUT"
    END_OF_CAPTURE = "END_OF_CAPTURE"


@dataclass
class FlowRecord:
    key: FlowKey
    initiator: tuple
    first_ts_us: int
    last_ts_us: int
    fwd_packets: list = field(default_factory=list)
    bwd_packets: list = field(default_factory=list)
    terminated_by: Termination = Termination.END_OF_CAPTURE

    def packets(self):
        """Both directions merged by timestamp as ``(is_forward, packet)``.

        At equal timestamps forward packets come first.
        """
        fwd = ((p.timestamp_us, 0, i, True, p) for i, p in enumerate(self.fwd_packets))
        bwd = ((p.timestamp_us, 1, i, False, p) for i, p in enumerate(self.bwd_packets))
        return [(item[3], item[4]) for item in heapq.merge(fwd, bwd)]


def assemble_flows(packets, idle_timeout_s=120.0):
    """Group packets into bidirectional flows.

    A flow ends on a FIN seen from both sides, on RST, when the next packet
    with its key arrives more than ``idle_timeout_s`` after its last packet,
    or at end of capture. Flows are returned ordered by first timestamp.
    """
    if not idle_timeout_s > 0:
        raise ValueError("idle_timeout_s must be > 0")
    if isinstance(packets, PacketCapture):
        packets = packets.packets
    packets = sorted(packets, key=lambda p: p.timestamp_us)
    idle_us = idle_timeout_s * 1e6

    done = []
    active = {}
    seq = 0

    for pkt in packets:
        key = FlowKey.of(pkt)
        entry = active.get(key)
        if entry is not None and pkt.timestamp_us - entry[1].last_ts_us > idle_us:
            entry[1].terminated_by = Termination.IDLE_TIMEOUT
            done.append(entry[:2])
            del active[key]
            entry = None
        if entry is None:
            flow = FlowRecord(key, (pkt.src_ip, pkt.src_port), pkt.timestamp_us, pkt.timestamp_us)
            entry = [seq, flow, False, False]
            seq += 1
            active[key] = entry
        flow = entry[1]
        forward = (pkt.src_ip, pkt.src_port) == flow.initiator
        (flow.fwd_packets if forward else flow.bwd_packets).append(pkt)
        flow.last_ts_us = pkt.timestamp_us

        if pkt.protocol is Protocol.TCP:
            if pkt.tcp_flags & TcpFlags.RST:
                flow.terminated_by = Termination.RST
                done.append(entry[:2])
                del active[key]
                continue
            if pkt.tcp_flags & TcpFlags.FIN:
                entry[2 if forward else 3] = True
                if entry[2] and entry[3]:
                    flow.terminated_by = Termination.FIN
                    done.append(entry[:2])
                    del active[key]

    for entry in active.values():
        done.append(entry[:2])
    done.sort(key=lambda e: (e[1].first_ts_us, e[0]))
    return [flow for _, flow in done]


def _stats(values):
    """(mean, population std, max, min); all zero for an empty list."""
    n = len(values)
    if n == 0:
        return 0.0, 0.0, 0.0, 0.0
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var), float(max(values)), float(min(values))


def _iats(timestamps_us):
    return [(b - a) / 1e6 for a, b in zip(timestamps_us, timestamps_us[1:])]


def _rate(amount, seconds):
    return amount / seconds if seconds > 0 else 0.0


def _bulks(merged, bulk_gap_us, bulk_min):
    """Per-direction lists of (bytes, packets, duration_s) for each bulk."""
    out = {True: [], False: []}
    run = []

    def close():
        if len(run) >= bulk_min:
            nbytes = sum(p.ip_total_len for p in run)
            dur = (run[-1].timestamp_us - run[0].timestamp_us) / 1e6
            out[run_dir].append((nbytes, len(run), dur))

    run_dir = None
    for fwd, pkt in merged:
        if run and fwd == run_dir and pkt.timestamp_us - run[-1].timestamp_us <= bulk_gap_us:
            run.append(pkt)
            continue
        if run:
            close()
        run = [pkt]
        run_dir = fwd
    if run:
        close()
    return out


def _periods(stamps_us, timeout_s):
    """Split timestamps at gaps > timeout into active spans and idle gaps (seconds)."""
    active, idle = [], []
    start = stamps_us[0]
    for prev, cur in zip(stamps_us, stamps_us[1:]):
        gap = (cur - prev) / 1e6
        if gap > timeout_s:
            active.append((prev - start) / 1e6)
            idle.append(gap)
            start = cur
    active.append((stamps_us[-1] - start) / 1e6)
    return active, idle


def compute_features(flow, activity_timeout_s=5.0, subflow_gap_s=1.0, bulk_gap_s=1.0,
                     bulk_min_packets=4):
    """Return the 63 features of ``flow`` as a dict keyed by FEATURE_NAMES.

    Lengths are IP total lengths; times are seconds, derived from integer
    microsecond differences. Zero denominators give
    0 rather than NaN.
    """
    merged = flow.packets()
    fwd = flow.fwd_packets
    bwd = flow.bwd_packets
    stamps = [p.timestamp_us for _, p in merged]
    lens = [p.ip_total_len for _, p in merged]
    fwd_lens = [p.ip_total_len for p in fwd]
    bwd_lens = [p.ip_total_len for p in bwd]

    duration = (merged[-1][1].timestamp_us - merged[0][1].timestamp_us) / 1e6
    n = len(merged)
    f = {}
    f["flow_duration"] = duration
    f["flow_bytes_per_s"] = _rate(sum(lens), duration)
    f["flow_packets_per_s"] = _rate(n, duration)
    iat = _iats(stamps)
    (f["flow_iat_mean"], f["flow_iat_std"], f["flow_iat_max"], f["flow_iat_min"]) = _stats(iat)

    f["fwd_packet_count"] = float(len(fwd))
    f["bwd_packet_count"] = float(len(bwd))
    f["fwd_bytes_total"] = float(sum(fwd_lens))
    f["bwd_bytes_total"] = float(sum(bwd_lens))
    f["fwd_packets_per_s"] = _rate(len(fwd), duration)
    f["bwd_packets_per_s"] = _rate(len(bwd), duration)

    mean, std, mx, mn = _stats(fwd_lens)
    f["fwd_pkt_len_max"], f["fwd_pkt_len_min"] = mx, mn
    f["fwd_pkt_len_mean"], f["fwd_pkt_len_std"] = mean, std
    mean, std, mx, mn = _stats(bwd_lens)
    f["bwd_pkt_len_max"], f["bwd_pkt_len_min"] = mx, mn
    f["bwd_pkt_len_mean"], f["bwd_pkt_len_std"] = mean, std
    mean, std, mx, mn = _stats(lens)
    f["pkt_len_min"], f["pkt_len_max"] = mn, mx
    f["pkt_len_mean"], f["pkt_len_std"] = mean, std
    f["pkt_len_variance"] = std * std

    f["fwd_header_len"] = float(sum(p.header_len for p in fwd))
    f["bwd_header_len"] = float(sum(p.header_len for p in bwd))

    stats = _stats(_iats([p.timestamp_us for p in fwd]))
    (f["fwd_iat_mean"], f["fwd_iat_std"], f["fwd_iat_max"], f["fwd_iat_min"]) = stats
    stats = _stats(_iats([p.timestamp_us for p in bwd]))
    (f["bwd_iat_mean"], f["bwd_iat_std"], f["bwd_iat_max"], f["bwd_iat_min"]) = stats

    for name, flag in (("syn", TcpFlags.SYN), ("ack", TcpFlags.ACK), ("fin", TcpFlags.FIN),
                       ("rst", TcpFlags.RST), ("psh", TcpFlags.PSH), ("urg", TcpFlags.URG)):
        f[f"{name}_count"] = float(sum(1 for _, p in merged if p.tcp_flags & flag))

    bulks = _bulks(merged, bulk_gap_s * 1e6, bulk_min_packets)
    for prefix, direction in (("fwd", True), ("bwd", False)):
        items = bulks[direction]
        if items:
            f[f"{prefix}_bytes_bulk_avg"] = math.fsum(b for b, _, _ in items) / len(items)
            f[f"{prefix}_packets_bulk_avg"] = math.fsum(c for _, c, _ in items) / len(items)
            f[f"{prefix}_bulk_rate_avg"] = math.fsum(_rate(b, d) for b, _, d in items) / len(items)
        else:
            f[f"{prefix}_bytes_bulk_avg"] = 0.0
            f[f"{prefix}_packets_bulk_avg"] = 0.0
            f[f"{prefix}_bulk_rate_avg"] = 0.0

    subflows = 1 + sum(1 for g in iat if g > subflow_gap_s)
    f["subflow_fwd_packets"] = len(fwd) / subflows
    f["subflow_fwd_bytes"] = sum(fwd_lens) / subflows
    f["subflow_bwd_packets"] = len(bwd) / subflows
    f["subflow_bwd_bytes"] = sum(bwd_lens) / subflows

    f["init_fwd_win_bytes"] = float(fwd[0].tcp_window) if fwd else 0.0
    f["init_bwd_win_bytes"] = float(bwd[0].tcp_window) if bwd else 0.0

    active, idle = _periods(stamps, activity_timeout_s)
    (f["active_mean"], f["active_std"], f["active_max"], f["active_min"]) = _stats(active)
    (f["idle_mean"], f["idle_std"], f["idle_max"], f["idle_min"]) = _stats(idle)

    f["down_up_ratio"] = len(bwd) / len(fwd) if fwd else 0.0
    return {name: float(f[name]) for name in FEATURE_NAMES}


def feature_row(features):
    """Feature dict -> list in canonical column order."""
    return [features[name] for name in FEATURE_NAMES]


def extract(path, config=None):
    """read_pcap -> assemble_flows -> compute_features for one capture."""
    config = config or FlowConfig()
    flows = assemble_flows(read_pcap(path), config.idle_timeout_s)
    return [
        compute_features(flow, config.activity_timeout_s, config.subflow_gap_s,
                         config.bulk_gap_s, config.bulk_min_packets)
        for flow in flows
    ]


def format_real(value):
    """Render a real with up to 9 significant digits."""
    text = f"{value:.9g}"
    return "0" if text == "-0" else text


def write_features_csv(fh, rows, labels=None):
    """Write feature dicts (and optional per-row label names) as CSV."""
    writer = csv.writer(fh, lineterminator="\n")
    header = list(FEATURE_NAMES) + (["label"] if labels is not None else [])
    writer.writerow(header)
    for i, row in enumerate(rows):
        out = [format_real(row[name]) for name in FEATURE_NAMES]
        if labels is not None:
            out.append(labels[i])
        writer.writerow(out)


def features_to_csv_text(rows, labels=None):
    buf = io.StringIO()
    write_features_csv(buf, rows, labels)
    return buf.getvalue()
