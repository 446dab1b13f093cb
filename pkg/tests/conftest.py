from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from lendgraph.ingest import CommEvent, EdgeRecord, LoanRecord, load_rules

T0 = datetime(2014, 3, 1, tzinfo=timezone.utc)


def voice(a, b, seconds, direction="outgoing", ts=T0):
    return CommEvent(a, b, direction, "voice", ts, float(seconds))


def sms(a, b, direction="outgoing", ts=T0):
    return CommEvent(a, b, direction, "sms", ts, None)


def loan(bid, default=False, amount=1000.0, interest=0.05, ts=T0):
    return LoanRecord(bid, default, amount, interest, ts)


def edges_from_pairs(pairs, weight=1.0):
    return [EdgeRecord(str(s), str(d), float(weight), 1) for s, d in pairs]


@pytest.fixture
def rules():
    return load_rules()


@pytest.fixture
def rng():
    return np.random.default_rng(20140101)


def random_digraph(rng, n, p):
    """Dense 0/1 adjacency and matching edge list, no self loops."""
    A = (rng.random((n, n)) < p).astype(float)
    np.fill_diagonal(A, 0.0)
    W = A * rng.integers(1, 500, size=(n, n))
    names = [f"n{i:03d}" for i in range(n)]
    edges = [EdgeRecord(names[i], names[j], float(W[i, j]), 1)
             for i, j in zip(*np.nonzero(A))]
    return A, W, names, edges


def minutes(n):
    return timedelta(minutes=n)


# acceptance criteria report one line each; collected here and repeated in the summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    def record(number, title, ok, detail=""):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}" + \
            (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
