"""Snort-style rule generation and matching for device-action detection.

Two rule templates are produced from a curated signature database:

* IP rules, ``alert tcp any any -> <ip> any (...)``, fire on TCP packets
  that have the listed address at *either* end.
* DNS rules, ``alert udp any any -> any 53 (... pcre:"/<re>/i"; ...)``,
  fire on DNS queries (UDP, either port 53) whose QNAME matches.

Rule files use a small subset of the Snort grammar: action ``alert`` only,
protocol ``tcp``/``udp``, source ``any any``, and the options ``msg``,
``pcre``, ``sid`` and ``rev``.
"""

import ipaddress
import json
import re
import struct
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from importlib import resources

from .dataset import CategoryLabel
from .exceptions import InvalidRegex, ParseError, RuleSyntaxError
from .pcap import Protocol

SID_BASE = 1000000
DNS_PORT = 53

# Backreferences and lookaround are outside the supported regex subset.
_FORBIDDEN_REGEX = re.compile(r"\\[1-9]|\\k|\(\?P=|\(\?<?[=!]|\(\?\(")


def compile_pattern(pattern):
    """Compile a signature regex (case-insensitive) or raise InvalidRegex."""
    if not isinstance(pattern, str) or not pattern:
        raise InvalidRegex(f"empty or non-text pattern {pattern!r}")
    if '"' in pattern or "\n" in pattern:
        raise InvalidRegex(f"pattern {pattern!r} contains a quote or newline")
    if _FORBIDDEN_REGEX.search(pattern):
        raise InvalidRegex(f"pattern {pattern!r} uses backreferences or lookaround")
    try:
        return re.compile(pattern, re.IGNORECASE)
    except re.error as exc:
        raise InvalidRegex(f"pattern {pattern!r}: {exc}") from None


@dataclass(frozen=True)
class SignatureEntry:
    id: str
    category: CategoryLabel
    action: str
    ip_addresses: tuple = ()
    domain_patterns: tuple = ()
    notes: str = ""

    @property
    def msg(self):
        return f"{self.category.name}/{self.action}"


def _entry_from_json(raw, pos):
    where = f"entry {pos}"
    if not isinstance(raw, dict):
        raise ParseError(f"{where}: expected an object")
    try:
        entry_id = str(raw["id"])
        where = f"entry {pos} ({entry_id})"
        category = CategoryLabel.parse(raw["category"])
        action = str(raw["action"])
    except KeyError as exc:
        raise ParseError(f"{where}: missing field {exc}") from None
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from None
    if '"' in action or ";" in action or "\n" in action:
        raise ParseError(f"{where}: action may not contain quotes, semicolons or newlines")
    ips = raw.get("ip_addresses", [])
    patterns = raw.get("domain_patterns", [])
    if not ips and not patterns:
        raise ParseError(f"{where}: needs at least one IP address or domain pattern")
    try:
        ips = tuple(str(ipaddress.IPv4Address(ip)) for ip in ips)
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from None
    for p in patterns:
        compile_pattern(p)
    notes = str(raw.get("notes", ""))
    return SignatureEntry(entry_id, category, action, ips, tuple(patterns), notes)


def parse_signature_db(text, source="<db>"):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, list):
        raise ParseError(f"{source}: expected a JSON array of entries")
    entries = [_entry_from_json(raw, i) for i, raw in enumerate(doc)]
    seen = set()
    for e in entries:
        if e.id in seen:
            raise ParseError(f"{source}: duplicate entry id {e.id!r}")
        seen.add(e.id)
    return entries


def load_signature_db(path):
    with open(path, encoding="utf-8") as fh:
        return parse_signature_db(fh.read(), str(path))


def example_db_text():
    return resources.files("iotscope").joinpath("data/example_signatures.json").read_text("utf-8")


def load_example_db():
    return parse_signature_db(example_db_text(), "example_signatures.json")


def signature_db_to_json(entries):
    return json.dumps([
        {"id": e.id, "category": e.category.name, "action": e.action,
         "ip_addresses": list(e.ip_addresses), "domain_patterns": list(e.domain_patterns),
         "notes": e.notes}
        for e in entries
    ], indent=2) + "\n"


# --- rules ---------------------------------------------------------------

@dataclass(frozen=True)
class SnortRule:
    protocol: str
    dest_ip: str
    dest_port: object
    options: tuple = field(default_factory=tuple)
    action: str = "alert"

    def option(self, key, default=None):
        for k, v in self.options:
            if k == key:
                return v
        return default

    @property
    def sid(self):
        return self.option("sid")

    @property
    def msg(self):
        return self.option("msg", "")

    @property
    def pcre(self):
        return self.option("pcre")

    def render(self):
        parts = []
        for key, value in self.options:
            if key in ("msg", "pcre"):
                value = f'"/{value}/i"' if key == "pcre" else f'"{value}"'
            parts.append(f"{key}:{value};")
        return (f"{self.action} {self.protocol} any any -> {self.dest_ip} {self.dest_port} "
                f"({' '.join(parts)})")

    def __str__(self):
        return self.render()


def emit_ip_rule(entry, ip, sid):
    if ip not in entry.ip_addresses:
        raise ValueError(f"{ip} is not listed in entry {entry.id}")
    return SnortRule("tcp", ip, "any", (("msg", entry.msg), ("sid", sid), ("rev", 1)))


def emit_dns_rule(entry, pattern, sid):
    compile_pattern(pattern)
    if pattern not in entry.domain_patterns:
        raise ValueError(f"{pattern!r} is not listed in entry {entry.id}")
    return SnortRule("udp", "any", DNS_PORT,
                     (("msg", entry.msg), ("pcre", pattern), ("sid", sid), ("rev", 1)))


def generate_rules(entries, sid_base=SID_BASE):
    """Rules for every (entry, ip) then (entry, pattern), sids in DB order.

    Returns ``(rules, sid_to_entry_id)``.
    """
    rules, owners = [], {}
    sid = sid_base
    for entry in entries:
        for ip in entry.ip_addresses:
            rules.append(emit_ip_rule(entry, ip, sid))
            owners[sid] = entry.id
            sid += 1
        for pattern in entry.domain_patterns:
            rules.append(emit_dns_rule(entry, pattern, sid))
            owners[sid] = entry.id
            sid += 1
    return rules, owners


def render_rules(rules, header=None):
    lines = [f"# {line}" for line in (header or [])]
    lines += [r.render() for r in rules]
    return "\n".join(lines) + "\n"


_RULE_HEAD = re.compile(
    r"^(?P<action>\S+)\s+(?P<proto>\S+)\s+(?P<src>\S+)\s+(?P<sport>\S+)\s+"
    r"(?P<dir>\S+)\s+(?P<dst>\S+)\s+(?P<dport>\S+)\s+\((?P<body>.*)\)\s*$"
)


def _split_options(body, lineno):
    """Split ``key:value; ...`` honouring double-quoted values."""
    opts = []
    i, n = 0, len(body)
    while True:
        while i < n and body[i].isspace():
            i += 1
        if i >= n:
            return opts
        colon = body.find(":", i)
        semi = body.find(";", i)
        if colon < 0 or (0 <= semi < colon):
            raise RuleSyntaxError(f"malformed option near {body[i:]!r}", lineno)
        key = body[i:colon].strip()
        j = colon + 1
        while j < n and body[j].isspace():
            j += 1
        if j < n and body[j] == '"':
            close = body.find('"', j + 1)
            if close < 0:
                raise RuleSyntaxError(f"unterminated quote in option {key!r}", lineno)
            value, quoted = body[j + 1:close], True
            j = close + 1
            while j < n and body[j].isspace():
                j += 1
            if j >= n or body[j] != ";":
                raise RuleSyntaxError(f"option {key!r} not terminated by ';'", lineno)
        else:
            end = body.find(";", j)
            if end < 0:
                raise RuleSyntaxError(f"option {key!r} not terminated by ';'", lineno)
            value, quoted = body[j:end].strip(), False
            j = end
        opts.append((key, value, quoted))
        i = j + 1


def _parse_int(text, what, lineno, low=0):
    if not re.fullmatch(r"\d+", text or ""):
        raise RuleSyntaxError(f"{what} must be an integer, got {text!r}", lineno)
    value = int(text)
    if value < low:
        raise RuleSyntaxError(f"{what} must be >= {low}", lineno)
    return value


def parse_rule(line, lineno=None):
    m = _RULE_HEAD.match(line.strip())
    if not m:
        raise RuleSyntaxError("line is not a rule of the form "
                              "'alert <proto> any any -> <ip> <port> (options)'", lineno)
    if m["action"] != "alert":
        raise RuleSyntaxError(f"unsupported action {m['action']!r} (only 'alert')", lineno)
    proto = m["proto"]
    if proto not in ("tcp", "udp"):
        raise RuleSyntaxError(f"unsupported protocol {proto!r}", lineno)
    if m["src"] != "any" or m["sport"] != "any":
        raise RuleSyntaxError("source must be 'any any'", lineno)
    if m["dir"] != "->":
        raise RuleSyntaxError(f"unsupported direction {m['dir']!r}", lineno)
    dst = m["dst"]
    if dst != "any":
        try:
            dst = str(ipaddress.IPv4Address(dst))
        except ValueError:
            raise RuleSyntaxError(f"bad destination address {dst!r}", lineno) from None
    dport = m["dport"]
    if dport != "any":
        dport = _parse_int(dport, "destination port", lineno)
        if dport > 65535:
            raise RuleSyntaxError(f"port {dport} out of range", lineno)

    options = []
    seen = set()
    for key, value, quoted in _split_options(m["body"], lineno):
        if key in seen:
            raise RuleSyntaxError(f"duplicate option {key!r}", lineno)
        seen.add(key)
        if key == "msg":
            if not quoted:
                raise RuleSyntaxError("msg must be quoted", lineno)
        elif key == "pcre":
            shaped = value.startswith("/") and value.endswith("/i") and len(value) >= 4
            if not quoted or not shaped:
                raise RuleSyntaxError('pcre must look like "/pattern/i"', lineno)
            value = value[1:-2]
            try:
                compile_pattern(value)
            except InvalidRegex as exc:
                raise RuleSyntaxError(str(exc), lineno) from None
        elif key == "sid":
            value = _parse_int(value, "sid", lineno, low=1)
        elif key == "rev":
            value = _parse_int(value, "rev", lineno, low=1)
        else:
            raise RuleSyntaxError(f"unsupported option {key!r}", lineno)
        options.append((key, value))
    if "sid" not in seen:
        raise RuleSyntaxError("rule has no sid", lineno)
    return SnortRule(proto, dst, dport, tuple(options))


def parse_rules_text(text):
    rules = []
    sids = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        rule = parse_rule(stripped, lineno)
        if rule.sid in sids:
            raise RuleSyntaxError(f"duplicate sid {rule.sid}", lineno)
        sids.add(rule.sid)
        rules.append(rule)
    return rules


def parse_rules(path):
    with open(path, encoding="utf-8") as fh:
        return parse_rules_text(fh.read())


# --- DNS -----------------------------------------------------------------

def parse_dns_qname(payload):
    """First question name of a DNS query, lowercased, or None.

    Returns None for anything that is not a well-formed query: short
    payloads, responses (QR set), QDCOUNT 0, compression pointers in the
    question, names over 255 bytes, empty names and non-ASCII labels.
    """
    if payload is None or len(payload) < 12:
        return None
    flags, qdcount = struct.unpack_from("!HH", payload, 2)
    if flags & 0x8000 or qdcount < 1:
        return None
    labels = []
    pos = 12
    wire_len = 0
    while True:
        if pos >= len(payload):
            return None
        length = payload[pos]
        if length & 0xC0:
            return None
        wire_len += 1 + length
        if wire_len > 255:
            return None
        pos += 1
        if length == 0:
            break
        if pos + length > len(payload):
            return None
        label = payload[pos:pos + length]
        pos += length
        if not label.isascii() or b"." in label:
            return None
        labels.append(label.lower().decode("ascii"))
    if not labels:
        return None
    return ".".join(labels)


def build_dns_query(qname, txid=0, qtype=1):
    """Encode a standard recursive query for ``qname``."""
    out = struct.pack("!HHHHHH", txid & 0xFFFF, 0x0100, 1, 0, 0, 0)
    for label in qname.rstrip(".").split("."):
        raw = label.encode("ascii")
        out += bytes([len(raw)]) + raw
    return out + b"\x00" + struct.pack("!HH", qtype, 1)


def build_dns_response(query, answer_ip):
    """Minimal A-record response to ``query`` (which must be our own encoding)."""
    txid = struct.unpack_from("!H", query, 0)[0]
    question = query[12:]
    header = struct.pack("!HHHHHH", txid, 0x8180, 1, 1, 0, 0)
    rdata = ipaddress.IPv4Address(answer_ip).packed
    answer = b"\xc0\x0c" + struct.pack("!HHIH", 1, 1, 300, 4) + rdata
    return header + question + answer


# --- matching ------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Alert:
    timestamp_us: int
    sid: int
    msg: str = field(compare=False)
    protocol: str = field(compare=False)
    src: tuple = field(compare=False)
    dst: tuple = field(compare=False)
    matched_entry_id: str = field(default=None, compare=False)

    def format(self):
        ts = datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(microseconds=self.timestamp_us)
        return (f"[{ts.strftime('%Y-%m-%dT%H:%M:%S.%fZ')}] [sid:{self.sid}] {self.msg} "
                f"{{{self.protocol}}} {self.src[0]}:{self.src[1]} -> {self.dst[0]}:{self.dst[1]}")


def _port_ok(rule, pkt):
    return rule.dest_port == "any" or rule.dest_port in (pkt.src_port, pkt.dst_port)


def rule_matches(rule, pkt, qname=None, compiled=None):
    """Predicate for one rule against one packet.

    Address and port conditions accept either packet endpoint. A ``pcre``
    option additionally requires a DNS query name matching the pattern.
    """
    if rule.protocol == "tcp" and pkt.protocol is not Protocol.TCP:
        return False
    if rule.protocol == "udp" and pkt.protocol is not Protocol.UDP:
        return False
    if rule.dest_ip != "any" and rule.dest_ip not in (pkt.src_ip, pkt.dst_ip):
        return False
    if not _port_ok(rule, pkt):
        return False
    pattern = rule.pcre
    if pattern is not None:
        if qname is None:
            qname = parse_dns_qname(pkt.l4_payload) if pkt.protocol is Protocol.UDP else None
        if qname is None:
            return False
        regex = compiled or compile_pattern(pattern)
        if not regex.search(qname):
            return False
    return True


def match_rules(packets, rules, sid_to_entry=None):
    """Alerts for every (rule, packet) pair that matches, ordered by time then sid."""
    compiled = {r.sid: compile_pattern(r.pcre) for r in rules if r.pcre is not None}
    sid_to_entry = sid_to_entry or {}
    alerts = []
    for pkt in packets:
        qname = None
        if pkt.protocol is Protocol.UDP and DNS_PORT in (pkt.src_port, pkt.dst_port):
            qname = parse_dns_qname(pkt.l4_payload)
        for rule in rules:
            if rule_matches(rule, pkt, qname, compiled.get(rule.sid)):
                alerts.append(Alert(pkt.timestamp_us, rule.sid, rule.msg, pkt.protocol.value,
                                    (pkt.src_ip, pkt.src_port), (pkt.dst_ip, pkt.dst_port),
                                    sid_to_entry.get(rule.sid)))
    alerts.sort()
    return alerts


def format_alert_log(alerts):
    return "".join(a.format() + "\n" for a in alerts)


@dataclass(frozen=True)
class DnsFrequencyRow:
    qname: str
    count: int
    distinct_sources: int


def dns_frequency_report(packets):
    """Query counts per name over UDP port-53 traffic, most frequent first."""
    counts = Counter()
    sources = defaultdict(set)
    for pkt in packets:
        if pkt.protocol is not Protocol.UDP or DNS_PORT not in (pkt.src_port, pkt.dst_port):
            continue
        name = parse_dns_qname(pkt.l4_payload)
        if name is None:
            continue
        counts[name] += 1
        sources[name].add(pkt.src_ip)
    rows = [DnsFrequencyRow(name, n, len(sources[name])) for name, n in counts.items()]
    rows.sort(key=lambda r: (-r.count, r.qname))
    return rows
