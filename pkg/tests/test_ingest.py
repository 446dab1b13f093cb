import csv
import random
from collections import defaultdict

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lendgraph.ingest import (CleaningReport, CommEvent, EdgeRecord, IngestError, Rejection,
                              aggregate_dyads, aggregate_sharded, cleaning_report,
                              clean_identifier, ingest, read_comms, read_edges, read_loans,
                              sms_duration, write_comms, write_edges, write_loans)

from conftest import T0, loan, minutes, sms, voice

# raw token -> canonical 11-digit number, built by hand against the bundled rules
IDENTIFIER_PAIRS = [
    ("09171234567", "09171234567"),
    ("+639171234567", "09171234567"),
    ("+6_39171234567", "09171234567"),
    ("00639171234567", "09171234567"),
    ("639171234567", "09171234567"),
    ("9171234567", "09171234567"),
    ("0917-123-4567", "09171234567"),
    ("(0917) 123 4567", "09171234567"),
    ("+63 917 123 4567", "09171234567"),
    ("+63-917-123-4567", "09171234567"),
    ("0063 917 123 4567", "09171234567"),
    ("0917.123.4567", "09171234567"),
    ("0917/123/4567", "09171234567"),
    (" 09181112222 ", "09181112222"),
    ("+639181112222", "09181112222"),
    ("639181112222", "09181112222"),
    ("9181112222", "09181112222"),
    ("09998887777", "09998887777"),
    ("+63(999)8887777", "09998887777"),
    ("0063-999-888-7777", "09998887777"),
]


class TestCleanIdentifier:
    @pytest.mark.parametrize("raw,canonical", IDENTIFIER_PAIRS)
    def test_rule_table_pairs(self, rules, raw, canonical):
        assert clean_identifier(raw, rules) == canonical

    def test_canonical_round_trip(self, rules):
        for _, canonical in IDENTIFIER_PAIRS:
            assert clean_identifier(canonical, rules) == canonical

    @pytest.mark.parametrize("raw,reason", [
        ("HELLO", "malformed"),
        ("", "malformed"),
        ("0917ABC4567", "malformed"),
        ("+15551234567", "malformed"),
        ("091712345678901", "malformed"),
        ("911", "service_number"),
        ("8888", "service_number"),
        ("12345", "short_code"),
        ("2366", "short_code"),
    ])
    def test_rejections(self, rules, raw, reason):
        out = clean_identifier(raw, rules)
        assert isinstance(out, Rejection)
        assert out.reason == reason
        assert not out

    @given(st.text(max_size=20))
    def test_never_raises(self, text):
        from lendgraph.ingest import load_rules
        out = clean_identifier(text, load_rules())
        if isinstance(out, str):
            assert len(out) == 11 and out.isdigit() and out.startswith("0")
        else:
            assert out.reason in ("short_code", "service_number", "malformed")


class TestSmsDuration:
    def test_sixty_seconds(self):
        assert sms_duration(sms("a", "b")) == 60

    def test_spurious_duration_ignored(self):
        ev = CommEvent("a", "b", "outgoing", "sms", T0, 999.0)
        assert sms_duration(ev) == 60

    def test_voice_is_contract_violation(self):
        with pytest.raises(ValueError):
            sms_duration(voice("a", "b", 10))

    def test_two_sms_sum(self):
        edges, _ = aggregate_dyads([sms("a", "b"), sms("a", "b")])
        assert edges == [EdgeRecord("a", "b", 120.0, 2)]


class TestCommEvent:
    def test_voice_needs_duration(self):
        with pytest.raises(IngestError):
            CommEvent("a", "b", "outgoing", "voice", T0, None)

    def test_negative_duration(self):
        with pytest.raises(IngestError):
            voice("a", "b", -1)

    def test_bad_direction(self):
        with pytest.raises(IngestError):
            CommEvent("a", "b", "sideways", "sms", T0)


def _random_events(seed, n, n_nodes=12):
    r = random.Random(seed)
    nodes = [f"09{i:09d}" for i in range(n_nodes)]
    out = []
    for k in range(n):
        a, b = r.choice(nodes), r.choice(nodes)
        d = r.choice(["outgoing", "incoming"])
        if r.random() < 0.5:
            out.append(sms(a, b, d, T0 + minutes(k)))
        else:
            out.append(voice(a, b, r.randint(0, 900), d, T0 + minutes(k)))
    return out


def _oracle(events):
    w, c, loops = defaultdict(float), defaultdict(int), 0
    for ev in events:
        src, dst = ((ev.borrower_id, ev.counterparty) if ev.direction == "outgoing"
                    else (ev.counterparty, ev.borrower_id))
        if src == dst:
            loops += 1
            continue
        w[(src, dst)] += 60.0 if ev.channel == "sms" else ev.duration_s
        c[(src, dst)] += 1
    return sorted(EdgeRecord(s, d, w[(s, d)], c[(s, d)]) for s, d in w), loops


class TestAggregateDyads:
    def test_voice_sum(self):
        edges, _ = aggregate_dyads([voice("A", "B", 60), voice("A", "B", 120)])
        assert edges == [EdgeRecord("A", "B", 180.0, 2)]

    def test_direction_preserved(self):
        edges, _ = aggregate_dyads([sms("A", "B"), sms("B", "A")])
        assert edges == [EdgeRecord("A", "B", 60.0, 1), EdgeRecord("B", "A", 60.0, 1)]

    def test_incoming_reverses(self):
        edges, _ = aggregate_dyads([voice("A", "B", 30, direction="incoming")])
        assert edges == [EdgeRecord("B", "A", 30.0, 1)]

    def test_self_loops_dropped_and_counted(self):
        edges, loops = aggregate_dyads([sms("A", "A"), voice("A", "B", 5)])
        assert loops == 1
        assert edges == [EdgeRecord("A", "B", 5.0, 1)]

    def test_matches_hash_map_oracle(self):
        events = _random_events(7, 1000)
        assert aggregate_dyads(events) == _oracle(events)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(0, 200))
    def test_permutation_invariant(self, seed, n):
        events = _random_events(seed, n)
        shuffled = list(events)
        random.Random(seed + 1).shuffle(shuffled)
        assert aggregate_dyads(events) == aggregate_dyads(shuffled)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(0, 200))
    def test_weight_conservation(self, seed, n):
        events = _random_events(seed, n)
        edges, _ = aggregate_dyads(events)
        kept = [e for e in events if e.borrower_id != e.counterparty]
        expected = sum(e.duration_s for e in kept if e.channel == "voice")
        expected += 60 * sum(e.channel == "sms" for e in kept)
        assert sum(e.weight_s for e in edges) == pytest.approx(expected, rel=1e-12)

    def test_idempotent_on_edges(self):
        edges, _ = aggregate_dyads(_random_events(3, 400))
        as_events = [voice(e.src, e.dst, e.weight_s) for e in edges]
        again, _ = aggregate_dyads(as_events)
        assert [(e.src, e.dst, e.weight_s) for e in again] == \
               [(e.src, e.dst, e.weight_s) for e in edges]

    @pytest.mark.parametrize("shards", [1, 2, 7, 16])
    def test_shard_count_irrelevant(self, shards):
        events = _random_events(11, 600)
        assert aggregate_sharded(events, shards) == aggregate_dyads(events)

    def test_sms_seconds_configurable(self):
        edges, _ = aggregate_dyads([sms("a", "b")], sms_seconds=30)
        assert edges[0].weight_s == 30


class TestCleaningReport:
    def test_reference_counts(self):
        rep = cleaning_report(4_142_474, 3_577_912, {"malformed": 564_562})
        assert rep.rejected_count == 564_562
        assert rep.raw_count - rep.kept_count == 564_562

    def test_empty(self):
        rep = cleaning_report(0, 0, {})
        assert rep.to_dict()["rejected_count"] == 0

    def test_nothing_rejected(self):
        assert cleaning_report(10, 10, {}).rejections == {}

    def test_non_reconciling(self):
        with pytest.raises(RuntimeError):
            cleaning_report(10, 8, {"malformed": 1})


HEADER = ["borrower_id", "counterparty", "direction", "channel", "timestamp_iso8601",
          "duration_s"]


def _write_rows(path, rows, header=HEADER):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


class TestCsv:
    def test_read_comms_rejections(self, tmp_path, rules):
        p = tmp_path / "comms.csv"
        _write_rows(p, [
            ["09171234567", "+639181112222", "outgoing", "voice", "2014-03-01T00:00:00Z", "30"],
            ["09171234567", "911", "outgoing", "voice", "2014-03-01T00:00:00Z", "5"],
            ["09171234567", "HELLO", "incoming", "sms", "2014-03-01T00:00:00Z", ""],
            ["09171234567", "2366", "incoming", "sms", "2014-03-01T00:00:00Z", ""],
            ["09171234567", "09181112222", "outgoing", "voice", "not-a-date", "5"],
            ["09171234567", "09181112222", "outgoing", "voice", "2014-03-01T00:00:00Z", "-4"],
            ["09171234567", "09181112222", "outgoing", "sms", "2014-03-01T00:00:00Z", "77"],
        ])
        events, hist, raw = read_comms(p, rules)
        assert raw == 7
        assert len(events) == 2
        assert events[0].counterparty == "09181112222"
        assert events[1].duration_s is None
        assert hist == {"service_number": 1, "malformed": 1, "short_code": 1, "bad_row": 2}

    def test_window_filter(self, tmp_path, rules):
        p = tmp_path / "comms.csv"
        _write_rows(p, [
            ["09171234567", "09181112222", "outgoing", "sms", "2013-01-01T00:00:00Z", ""],
            ["09171234567", "09181112222", "outgoing", "sms", "2014-06-01T00:00:00Z", ""],
        ])
        from lendgraph.ingest import parse_timestamp
        window = (parse_timestamp("2014-01-01T00:00:00Z"), parse_timestamp("2015-06-27T00:00:00Z"))
        events, hist, _ = read_comms(p, rules, window)
        assert len(events) == 1 and hist["out_of_window"] == 1

    def test_bad_header(self, tmp_path, rules):
        p = tmp_path / "comms.csv"
        _write_rows(p, [], header=["a", "b"])
        with pytest.raises(IngestError):
            read_comms(p, rules)

    def test_round_trips(self, tmp_path, rules):
        events = _random_events(5, 50)
        write_comms(tmp_path / "c.csv", events)
        back, hist, raw = read_comms(tmp_path / "c.csv", rules)
        assert raw == 50 and not hist
        assert aggregate_dyads(back) == aggregate_dyads(events)
        edges, _ = aggregate_dyads(events)
        write_edges(tmp_path / "e.csv", edges)
        assert read_edges(tmp_path / "e.csv") == edges
        loans = [loan("09171234567", True, 1234.5, 0.05), loan("09181112222", False, 99.99, 0.2)]
        write_loans(tmp_path / "l.csv", loans)
        assert read_loans(tmp_path / "l.csv") == loans

    def test_duplicate_borrower(self, tmp_path):
        loans = [loan("09171234567"), loan("09171234567")]
        write_loans(tmp_path / "l.csv", loans)
        with pytest.raises(IngestError, match="duplicate"):
            read_loans(tmp_path / "l.csv")

    @pytest.mark.parametrize("amount,interest", [(0.0, 0.1), (-5.0, 0.1), (10.0, 10.0)])
    def test_loan_invariants(self, amount, interest):
        with pytest.raises(IngestError):
            loan("x", amount=amount, interest=interest)

    def test_ingest_stage(self, tmp_path, rules):
        events = _random_events(9, 120) + [sms("09000000001", "09000000001")]
        write_comms(tmp_path / "c.csv", events)
        write_loans(tmp_path / "l.csv", [loan("09000000001")])
        edges, loans, report = ingest(tmp_path / "c.csv", tmp_path / "l.csv", rules)
        assert isinstance(report, CleaningReport)
        assert report.raw_count == report.kept_count + report.rejected_count
        assert report.rejections.get("self_loop", 0) >= 1
        assert edges == aggregate_dyads(events)[0]
        assert report.notes
