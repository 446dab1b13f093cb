"""Walk through the borrower graph metrics on a hand-sized call log.

Run with ``python demos/graph_metrics.py``.
"""

from datetime import datetime, timezone

from lendgraph.graph import build_graph, metrics_table
from lendgraph.ingest import CommEvent, LoanRecord, aggregate_dyads

T = datetime(2014, 3, 1, tzinfo=timezone.utc)

# Two borrowers who share a contact, plus one borrower with a private circle.
calls = [
    ("09170000001", "09170000002", "voice", 120),
    ("09170000001", "09170000002", "sms", None),
    ("09170000002", "09170000003", "voice", 45),
    ("09170000003", "09170000001", "voice", 300),
    ("09170000004", "09170000005", "sms", None),
    ("09170000004", "09170000006", "voice", 60),
]
events = [CommEvent(a, b, "outgoing", ch, T, None if s is None else float(s))
          for a, b, ch, s in calls]
edges, _ = aggregate_dyads(events)
print("dyads (caller -> receiver, seconds):")
for e in edges:
    print(f"  {e.src} -> {e.dst}  {e.weight_s:6.0f}  over {e.n_events} events")

loans = [LoanRecord(b, False, 5000.0, 0.05, T)
         for b in ("09170000001", "09170000002", "09170000004")]
g = build_graph(edges, loans)
print()
print(metrics_table(g).to_string(index=False))
# The first two borrowers sit in a closed triangle, so each has one triad and
# farness 1. The third borrower is the hub of a star: no triads, and the
# largest eigenvector value inside its own component.
