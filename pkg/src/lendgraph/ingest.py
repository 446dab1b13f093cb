"""Parsing, cleaning and dyad aggregation of raw communication records.

Raw CDR rows are parsed into :class:`CommEvent`, identifiers are folded to
11-digit national numbers by a country rule table, and events are summed on
ordered caller -> receiver pairs into :class:`EdgeRecord` rows.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

SMS_SECONDS = 60.0

COMMS_HEADER = ["borrower_id", "counterparty", "direction", "channel",
                "timestamp_iso8601", "duration_s"]
LOANS_HEADER = ["borrower_id", "default", "amount", "interest",
                "contract_time_iso8601"]
EDGES_HEADER = ["src", "dst", "weight_s", "n_events"]

REJECTION_KINDS = ("short_code", "service_number", "malformed")


class IngestError(ValueError):
    """A row or table violates its declared schema."""


@dataclass(frozen=True, slots=True)
class Rejection:
    """Identifier that could not be canonicalized.

    ``reason`` is one of ``short_code``, ``service_number`` or ``malformed``.
    """
    reason: str
    raw: str = ""

    def __bool__(self):
        return False


@dataclass(frozen=True, slots=True)
class CommEvent:
    borrower_id: str
    counterparty: str
    direction: str          # "outgoing" | "incoming"
    channel: str            # "voice" | "sms"
    timestamp: datetime
    duration_s: float | None = None

    def __post_init__(self):
        if self.direction not in ("outgoing", "incoming"):
            raise IngestError(f"bad direction {self.direction!r}")
        if self.channel not in ("voice", "sms"):
            raise IngestError(f"bad channel {self.channel!r}")
        if self.channel == "voice":
            if self.duration_s is None or not math.isfinite(self.duration_s) or self.duration_s < 0:
                raise IngestError(f"voice event needs duration >= 0, got {self.duration_s!r}")

    @property
    def dyad(self) -> tuple[str, str]:
        """Ordered (src, dst) pair following the call direction."""
        if self.direction == "outgoing":
            return self.borrower_id, self.counterparty
        return self.counterparty, self.borrower_id


@dataclass(frozen=True, slots=True, order=True)
class EdgeRecord:
    src: str
    dst: str
    weight_s: float
    n_events: int = 1


@dataclass(frozen=True, slots=True)
class LoanRecord:
    borrower_id: str
    default: bool
    amount: float
    interest: float
    contract_time: datetime

    def __post_init__(self):
        if not self.amount > 0:
            raise IngestError(f"loan amount must be positive, got {self.amount}")
        if not 0 <= self.interest < 10:
            raise IngestError(f"interest {self.interest} outside [0, 10)")


# --------------------------------------------------------------------------
# identifiers

def load_rules(path: str | Path | None = None) -> dict:
    """Load a country rule table; the bundled Philippine-style table by default."""
    if path is None:
        text = resources.files("lendgraph.data").joinpath("rules.json").read_text()
    else:
        text = Path(path).read_text()
    rules = json.loads(text)
    rules.setdefault("length", 11)
    rules.setdefault("national_prefix", "0")
    rules.setdefault("international_prefixes", ["+", "00"])
    rules.setdefault("strip_chars", " -()._/")
    rules.setdefault("short_code_max_len", 8)
    rules.setdefault("service_numbers", [])
    return rules


def clean_identifier(raw: str, country_rules: dict) -> str | Rejection:
    """Fold a raw caller token into an 11-digit national number.

    International forms (``+CC...``, ``00CC...``, bare ``CC...``) of the
    configured country code are rewritten with the national prefix. Tokens
    that are not digits after stripping separators are ``malformed``; listed
    hotlines are ``service_number``; anything short enough is a
    ``short_code``.
    """
    token = str(raw).strip()
    for ch in country_rules["strip_chars"]:
        token = token.replace(ch, "")
    if not token:
        return Rejection("malformed", raw)

    international = False
    for prefix in sorted(country_rules["international_prefixes"], key=len, reverse=True):
        if token.startswith(prefix):
            token = token[len(prefix):]
            international = True
            break
    if not token.isdigit() or not token.isascii():
        return Rejection("malformed", raw)
    if token in country_rules["service_numbers"]:
        return Rejection("service_number", raw)

    length = country_rules["length"]
    national = country_rules["national_prefix"]
    cc = country_rules["country_code"]
    subscriber_len = length - len(national)

    if (international or len(token) == len(cc) + subscriber_len) and token.startswith(cc):
        rest = token[len(cc):]
        if len(rest) == subscriber_len:
            return national + rest
        return Rejection("malformed", raw)
    if international:
        # foreign country code
        return Rejection("malformed", raw)
    if len(token) == length and token.startswith(national):
        return token
    if len(token) == subscriber_len and not token.startswith(national):
        return national + token
    if len(token) <= country_rules["short_code_max_len"]:
        return Rejection("short_code", raw)
    return Rejection("malformed", raw)


# --------------------------------------------------------------------------
# events and dyads

def sms_duration(event: CommEvent, seconds: float = SMS_SECONDS) -> float:
    """Information proxy of an SMS; any duration on the record is ignored."""
    if event.channel != "sms":
        raise ValueError("sms_duration called on a voice event")
    return seconds


def event_weight(event: CommEvent, sms_seconds: float = SMS_SECONDS) -> float:
    if event.channel == "sms":
        return sms_duration(event, sms_seconds)
    return float(event.duration_s)


def aggregate_dyads(events: Iterable[CommEvent],
                    sms_seconds: float = SMS_SECONDS) -> tuple[list[EdgeRecord], int]:
    """Sum events on ordered (src, dst) pairs.

    Returns the edge list sorted by (src, dst) and the number of self-loop
    events dropped.
    """
    weight: dict[tuple[str, str], float] = {}
    count: Counter = Counter()
    n_loops = 0
    for ev in events:
        key = ev.dyad
        if key[0] == key[1]:
            n_loops += 1
            continue
        weight[key] = weight.get(key, 0.0) + event_weight(ev, sms_seconds)
        count[key] += 1
    edges = [EdgeRecord(s, d, weight[(s, d)], count[(s, d)]) for s, d in sorted(weight)]
    return edges, n_loops


def merge_edges(edge_lists: Iterable[Iterable[EdgeRecord]]) -> list[EdgeRecord]:
    """Merge partial edge lists (e.g. per-shard aggregates) into one."""
    weight: dict[tuple[str, str], float] = {}
    count: Counter = Counter()
    for edges in edge_lists:
        for e in edges:
            key = (e.src, e.dst)
            weight[key] = weight.get(key, 0.0) + e.weight_s
            count[key] += e.n_events
    return [EdgeRecord(s, d, weight[(s, d)], count[(s, d)]) for s, d in sorted(weight)]


def aggregate_sharded(events: Iterable[CommEvent], n_shards: int,
                      sms_seconds: float = SMS_SECONDS) -> tuple[list[EdgeRecord], int]:
    """Shard by dyad, aggregate each shard, merge. Same output as the serial path."""
    import zlib

    shards: list[list[CommEvent]] = [[] for _ in range(n_shards)]
    for ev in events:
        s, d = ev.dyad
        shards[zlib.crc32(f"{s}|{d}".encode()) % n_shards].append(ev)
    parts, loops = [], 0
    for shard in shards:
        edges, n = aggregate_dyads(shard, sms_seconds)
        parts.append(edges)
        loops += n
    return merge_edges(parts), loops


# --------------------------------------------------------------------------
# bookkeeping

@dataclass
class CleaningReport:
    raw_count: int
    kept_count: int
    rejections: dict[str, int] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def rejected_count(self) -> int:
        return sum(self.rejections.values())

    def to_dict(self) -> dict:
        return {
            "raw_count": self.raw_count,
            "kept_count": self.kept_count,
            "rejected_count": self.rejected_count,
            "rejections": dict(sorted(self.rejections.items())),
            "notes": list(self.notes),
        }


def cleaning_report(raw_count: int, kept_count: int,
                    rejection_histogram: dict[str, int]) -> CleaningReport:
    """Build a report; raises RuntimeError if the totals do not reconcile."""
    hist = {k: int(v) for k, v in rejection_histogram.items() if v}
    if raw_count != kept_count + sum(hist.values()):
        raise RuntimeError(
            f"cleaning totals do not reconcile: raw={raw_count} kept={kept_count} "
            f"rejected={sum(hist.values())}")
    return CleaningReport(raw_count, kept_count, hist)


# --------------------------------------------------------------------------
# CSV I/O

def parse_timestamp(text: str) -> datetime:
    ts = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _check_header(reader: csv.DictReader, expected: list[str], path) -> None:
    if reader.fieldnames is None or list(reader.fieldnames) != expected:
        raise IngestError(f"{path}: header {reader.fieldnames} != {expected}")


def parse_comm_row(row: dict) -> CommEvent:
    channel = row["channel"].strip().lower()
    dur_text = (row.get("duration_s") or "").strip()
    if channel == "sms":
        duration = None
    else:
        try:
            duration = float(dur_text)
        except ValueError:
            raise IngestError(f"bad duration {dur_text!r}") from None
    try:
        ts = parse_timestamp(row["timestamp_iso8601"])
    except (ValueError, AttributeError):
        raise IngestError(f"bad timestamp {row['timestamp_iso8601']!r}") from None
    return CommEvent(
        borrower_id=row["borrower_id"].strip(),
        counterparty=row["counterparty"].strip(),
        direction=row["direction"].strip().lower(),
        channel=channel,
        timestamp=ts,
        duration_s=duration,
    )


def read_comms(path, rules: dict, window: tuple[datetime, datetime] | None = None,
               ) -> tuple[list[CommEvent], Counter, int]:
    """Parse and clean ``comms.csv``.

    Returns kept events (identifiers canonical), the rejection histogram and
    the raw row count.
    """
    hist: Counter = Counter()
    kept: list[CommEvent] = []
    raw = 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader, COMMS_HEADER, path)
        for row in reader:
            raw += 1
            try:
                ev = parse_comm_row(row)
            except (IngestError, KeyError, AttributeError):
                hist["bad_row"] += 1
                continue
            if window is not None and not (window[0] <= ev.timestamp <= window[1]):
                hist["out_of_window"] += 1
                continue
            b = clean_identifier(ev.borrower_id, rules)
            c = clean_identifier(ev.counterparty, rules)
            if isinstance(b, Rejection):
                hist[b.reason] += 1
                continue
            if isinstance(c, Rejection):
                hist[c.reason] += 1
                continue
            kept.append(replace(ev, borrower_id=b, counterparty=c))
    return kept, hist, raw


def iter_comm_events(events: Iterable[CommEvent]) -> Iterator[dict]:
    for ev in events:
        yield {
            "borrower_id": ev.borrower_id,
            "counterparty": ev.counterparty,
            "direction": ev.direction,
            "channel": ev.channel,
            "timestamp_iso8601": format_timestamp(ev.timestamp),
            "duration_s": "" if ev.duration_s is None else f"{ev.duration_s:g}",
        }


def write_comms(path, events: Iterable[CommEvent]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COMMS_HEADER, lineterminator="\n")
        w.writeheader()
        w.writerows(iter_comm_events(events))


def read_loans(path, rules: dict | None = None) -> list[LoanRecord]:
    """Parse ``loans.csv``; duplicate borrowers and bad rows raise IngestError."""
    loans: list[LoanRecord] = []
    seen: set[str] = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader, LOANS_HEADER, path)
        for lineno, row in enumerate(reader, start=2):
            try:
                bid = row["borrower_id"].strip()
                if rules is not None:
                    canon = clean_identifier(bid, rules)
                    if isinstance(canon, Rejection):
                        raise IngestError(f"borrower id {bid!r}: {canon.reason}")
                    bid = canon
                flag = row["default"].strip()
                if flag not in ("0", "1"):
                    raise IngestError(f"default flag {flag!r}")
                loan = LoanRecord(bid, flag == "1", float(row["amount"]),
                                  float(row["interest"]),
                                  parse_timestamp(row["contract_time_iso8601"]))
            except (ValueError, KeyError, AttributeError) as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from None
            if loan.borrower_id in seen:
                raise IngestError(f"{path}:{lineno}: duplicate borrower {loan.borrower_id}")
            seen.add(loan.borrower_id)
            loans.append(loan)
    return loans


def write_loans(path, loans: Iterable[LoanRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOANS_HEADER)
        for ln in loans:
            w.writerow([ln.borrower_id, int(ln.default), repr(float(ln.amount)),
                        repr(float(ln.interest)), format_timestamp(ln.contract_time)])


def write_edges(path, edges: Iterable[EdgeRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGES_HEADER)
        for e in edges:
            w.writerow([e.src, e.dst, repr(float(e.weight_s)), e.n_events])


def read_edges(path) -> list[EdgeRecord]:
    edges = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader, EDGES_HEADER, path)
        for row in reader:
            edges.append(EdgeRecord(row["src"], row["dst"], float(row["weight_s"]),
                                    int(row["n_events"])))
    return edges


def ingest(comms_path, loans_path, rules: dict,
           window: tuple[datetime, datetime] | None = None,
           sms_seconds: float = SMS_SECONDS):
    """Full ingest stage: returns (edges, loans, report)."""
    events, hist, raw = read_comms(comms_path, rules, window)
    edges, n_loops = aggregate_dyads(events, sms_seconds)
    if n_loops:
        hist["self_loop"] += n_loops
    report = cleaning_report(raw, len(events) - n_loops, hist)
    report.notes.append("rejection taxonomy follows the configured rule table")
    loans = read_loans(loans_path, rules)
    return edges, loans, report
