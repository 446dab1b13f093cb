"""Synthetic lender datasets with planted graph and location signal."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .geo import M_PER_DEG, GeoPing, PoiEntry, load_vocabulary, write_pings, write_pois
from .graph import CommGraph, build_graph, metrics_table
from .ingest import (CommEvent, EdgeRecord, LoanRecord, aggregate_dyads, parse_timestamp,
                     write_comms, write_loans)


def node_name(i: int) -> str:
    """11-digit national mobile number for generated node ``i``."""
    return f"09{i:09d}"


def ba_edges(n: int, m: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Preferential-attachment growth; returns (new_node, target) index arrays.

    Starts from a clique on ``m + 1`` nodes; each later node links to ``m``
    distinct earlier nodes chosen with probability proportional to degree.
    """
    if not n > m >= 1:
        raise ValueError("need n > m >= 1")
    seed_src, seed_dst = np.triu_indices(m + 1, k=1)
    n_edges = len(seed_src) + (n - m - 1) * m
    src = np.empty(n_edges, dtype=np.int64)
    dst = np.empty(n_edges, dtype=np.int64)
    # reversed so the seed edges read new -> old like the rest
    src[:len(seed_src)] = seed_dst
    dst[:len(seed_src)] = seed_src
    ends = np.empty(2 * n_edges, dtype=np.int64)
    fill = 2 * len(seed_src)
    ends[:len(seed_src)] = seed_src
    ends[len(seed_src):fill] = seed_dst
    e = len(seed_src)
    for v in range(m + 1, n):
        chosen: set[int] = set()
        while len(chosen) < m:
            for t in ends[rng.integers(0, fill, size=m - len(chosen))]:
                chosen.add(int(t))
        for t in sorted(chosen):
            src[e] = v
            dst[e] = t
            ends[fill] = v
            ends[fill + 1] = t
            fill += 2
            e += 1
    return src, dst


def generate_ba_graph(n: int, m: int, seed: int, duration_mu: float = 5.0,
                      duration_sigma: float = 1.2) -> list[EdgeRecord]:
    """BA graph as an edge list with lognormal total-duration weights."""
    rng = np.random.default_rng(seed)
    src, dst = ba_edges(n, m, rng)
    w = np.round(rng.lognormal(duration_mu, duration_sigma, size=len(src))) + 1.0
    return [EdgeRecord(node_name(s), node_name(d), float(x), 1)
            for s, d, x in zip(src.tolist(), dst.tolist(), w.tolist())]


# --------------------------------------------------------------------------
# full datasets

GOOD_CATEGORIES = ["dentist", "pharmacy", "car_rental", "funeral_home", "veterinary_care",
                   "car_wash", "art_gallery", "furniture_store", "post_office", "library"]
BAD_CATEGORIES = ["city_hall", "airport", "church", "florist", "bus_station", "night_club"]


class CalibrationError(ValueError):
    """The requested default rate cannot be reached with the given link."""


@dataclass
class GenConfig:
    n_borrowers: int = 784
    n_contacts: int = 20_000
    ba_m: int = 3
    borrower_sampling: str = "degree"       # "degree" or "uniform"
    events_per_dyad: float = 3.0
    p_sms: float = 0.86
    p_outgoing: float = 0.9
    voice_mu: float = 4.5
    voice_sigma: float = 1.0
    # logistic default link on raw eigen and out_edges
    default_rate: float = 0.1939
    beta_eigen: float = 2.0
    beta_out: float = -0.35
    amount_mu: float = 9.35
    amount_sigma: float = 0.35
    defaulter_amount_skew: float = 1.154
    interest_low: float = 0.04
    interest_high: float = 0.06
    defaulter_interest_premium: float = 0.0
    pings_per_borrower: float = 103.4
    center_lat: float = 14.5995
    center_lon: float = 120.9842
    region_km: float = 20.0
    anchor_jitter_m: float = 25.0
    poi_density: float = 2.0                   # background POIs per km^2 per category
    good_categories: list[str] = field(default_factory=lambda: list(GOOD_CATEGORIES))
    bad_categories: list[str] = field(default_factory=lambda: list(BAD_CATEGORIES))
    good_per_anchor: float = 5.0               # scaled by (amount*interest / mean)
    bad_per_anchor: float = 0.2                # defaulters only
    planted_radius_m: float = 40.0
    study_start: str = "2014-01-01T00:00:00Z"
    study_end: str = "2015-06-27T23:59:59Z"
    contract_start: str = "2013-07-01T00:00:00Z"
    contract_end: str = "2014-08-11T00:00:00Z"
    seed: int = 0

    def __post_init__(self):
        if self.n_borrowers < 1:
            raise ValueError("n_borrowers must be >= 1")
        if self.ba_m < 1:
            raise ValueError("ba_m must be >= 1")
        if self.n_contacts <= self.ba_m:
            raise ValueError("n_contacts must exceed ba_m")
        if self.n_borrowers > self.n_contacts:
            raise ValueError("more borrowers than nodes")
        for name in ("p_sms", "p_outgoing", "default_rate"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")

    @classmethod
    def from_json(cls, path) -> "GenConfig":
        data = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticData:
    events: list[CommEvent]
    loans: list[LoanRecord]
    pings: list[GeoPing]
    pois: list[PoiEntry]
    config: GenConfig


def _streams(seed: int) -> tuple[np.random.Generator, ...]:
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))


def _uniform_times(rng, lo: datetime, hi: datetime, size: int) -> list[datetime]:
    span = (hi - lo).total_seconds()
    secs = np.floor(rng.uniform(0, max(span, 0.0), size=size))
    return [lo + timedelta(seconds=float(s)) for s in secs]


def generate_comms(config: GenConfig, contract_times: dict[str, datetime] | None = None,
                   rng: np.random.Generator | None = None):
    """Communication events among borrowers and their BA-graph contacts.

    Only dyads with at least one borrower are observed, as on borrower
    handsets. Returns (events, borrower ids in selection order).
    """
    rng = _streams(config.seed)[0] if rng is None else rng
    src, dst = ba_edges(config.n_contacts, config.ba_m, rng)
    deg = np.bincount(src, minlength=config.n_contacts) + np.bincount(dst, minlength=config.n_contacts)
    if config.borrower_sampling == "degree":
        p = deg / deg.sum()
    elif config.borrower_sampling == "uniform":
        p = None
    else:
        raise ValueError("borrower_sampling must be 'degree' or 'uniform'")
    chosen = rng.choice(config.n_contacts, size=config.n_borrowers, replace=False, p=p)
    is_b = np.zeros(config.n_contacts, dtype=bool)
    is_b[chosen] = True
    borrowers = [node_name(i) for i in chosen.tolist()]

    ws, we = parse_timestamp(config.study_start), parse_timestamp(config.study_end)
    events: list[CommEvent] = []
    obs = np.flatnonzero(is_b[src] | is_b[dst])
    n_ev = 1 + rng.poisson(max(config.events_per_dyad - 1.0, 0.0), size=len(obs))
    for e, k in zip(obs.tolist(), n_ev.tolist()):
        a, b = int(src[e]), int(dst[e])
        owner, other = (a, b) if is_b[a] and (not is_b[b] or a < b) else (b, a)
        owner_id = node_name(owner)
        lo, hi = ws, we
        if contract_times is not None and owner_id in contract_times:
            c = contract_times[owner_id]
            lo, hi = max(ws, c), min(we, c + timedelta(days=366))
        sms = rng.random(k) < config.p_sms
        outgoing = rng.random(k) < config.p_outgoing
        dur = np.round(rng.lognormal(config.voice_mu, config.voice_sigma, size=k)) + 1.0
        stamps = _uniform_times(rng, lo, hi, k)
        for j in range(k):
            events.append(CommEvent(
                borrower_id=owner_id, counterparty=node_name(other),
                direction="outgoing" if outgoing[j] else "incoming",
                channel="sms" if sms[j] else "voice", timestamp=stamps[j],
                duration_s=None if sms[j] else float(dur[j])))
    return events, borrowers


def _logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def calibrate_intercept(linear: np.ndarray, target: float, lo: float = -40.0,
                        hi: float = 40.0, tol: float = 1e-12) -> float:
    """Bisection for ``b0`` with ``mean(logistic(b0 + linear)) == target``."""
    if not 0 < target < 1:
        raise CalibrationError(f"target default rate {target} outside (0, 1)")
    f_lo = _logistic(lo + linear).mean() - target
    f_hi = _logistic(hi + linear).mean() - target
    if f_lo > 0 or f_hi < 0:
        raise CalibrationError(f"target rate {target} not bracketed by intercepts [{lo}, {hi}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _logistic(mid + linear).mean() < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def default_linear_predictor(metrics, config: GenConfig) -> np.ndarray:
    return (config.beta_eigen * metrics["eigen"].to_numpy(dtype=float)
            + config.beta_out * metrics["out_edges"].to_numpy(dtype=float))


def generate_loans(graph: CommGraph, config: GenConfig, rng: np.random.Generator | None = None,
                   contract_times: dict[str, datetime] | None = None) -> list[LoanRecord]:
    """Loans for the graph's borrowers with defaults planted on topology.

    ``P(default) = logistic(b0 + beta_eigen * eigen + beta_out * out_edges)``
    with ``b0`` calibrated so the expected default share equals
    ``config.default_rate``.
    """
    rng = _streams(config.seed)[1] if rng is None else rng
    metrics = metrics_table(graph)
    lin = default_linear_predictor(metrics, config)
    b0 = calibrate_intercept(lin, config.default_rate)
    p_def = _logistic(b0 + lin)
    n = len(metrics)
    default = rng.random(n) < p_def
    amount = rng.lognormal(config.amount_mu, config.amount_sigma, size=n)
    amount = np.round(np.where(default, amount * config.defaulter_amount_skew, amount), 2)
    interest = rng.uniform(config.interest_low, config.interest_high, size=n)
    interest = np.round(interest + np.where(default, config.defaulter_interest_premium, 0.0), 4)
    if contract_times is None:
        cs, ce = parse_timestamp(config.contract_start), parse_timestamp(config.contract_end)
        stamps = _uniform_times(rng, cs, ce, n)
    else:
        stamps = [contract_times[b] for b in metrics["borrower_id"]]
    return [LoanRecord(b, bool(d), float(a), float(r), t) for b, d, a, r, t in
            zip(metrics["borrower_id"], default, amount, interest, stamps)]


def _offset(lat, lon, d_north_m, d_east_m):
    lat2 = lat + d_north_m / M_PER_DEG
    lon2 = lon + d_east_m / (M_PER_DEG * np.cos(np.radians(lat)))
    return lat2, lon2


def generate_geo(loans: Sequence[LoanRecord], config: GenConfig,
                 rng: np.random.Generator | None = None,
                 vocabulary: Sequence[str] | None = None):
    """Home/work anchored pings plus background and planted POIs.

    Performing and defaulted borrowers alike get ``good`` POIs near their
    anchors at a rate proportional to ``amount * interest``; defaulters also
    get ``bad`` POIs. Returns (pings, pois).
    """
    rng = _streams(config.seed)[2] if rng is None else rng
    vocab = load_vocabulary() if vocabulary is None else list(vocabulary)
    half = config.region_km * 500.0
    n = len(loans)
    anchors_n = rng.uniform(-half, half, size=(n, 2))
    anchors_e = rng.uniform(-half, half, size=(n, 2))
    a_lat, a_lon = _offset(config.center_lat, config.center_lon, anchors_n, anchors_e)

    pois: list[PoiEntry] = []
    area = config.region_km ** 2
    n_bg = rng.poisson(config.poi_density * area, size=len(vocab))
    for cat, k in zip(vocab, n_bg.tolist()):
        plat, plon = _offset(config.center_lat, config.center_lon,
                             rng.uniform(-half, half, k), rng.uniform(-half, half, k))
        pois.extend(PoiEntry(cat, round(float(a), 7), round(float(b), 7))
                    for a, b in zip(plat, plon))

    scale = np.array([ln.amount * ln.interest for ln in loans])
    scale = scale / scale.mean() if n and scale.mean() > 0 else scale
    for i, ln in enumerate(loans):
        for a in range(2):
            planted = []
            if config.good_categories and config.good_per_anchor > 0:
                k = rng.poisson(config.good_per_anchor * scale[i])
                planted += [config.good_categories[j] for j in
                            rng.integers(0, len(config.good_categories), size=k)]
            if ln.default and config.bad_categories and config.bad_per_anchor > 0:
                k = rng.poisson(config.bad_per_anchor)
                planted += [config.bad_categories[j] for j in
                            rng.integers(0, len(config.bad_categories), size=k)]
            if not planted:
                continue
            r = config.planted_radius_m * np.sqrt(rng.random(len(planted)))
            th = rng.uniform(0, 2 * np.pi, len(planted))
            plat, plon = _offset(a_lat[i, a], a_lon[i, a], r * np.cos(th), r * np.sin(th))
            pois.extend(PoiEntry(c, round(float(x), 7), round(float(y), 7))
                        for c, x, y in zip(planted, plat, plon))

    ws, we = parse_timestamp(config.study_start), parse_timestamp(config.study_end)
    pings: list[GeoPing] = []
    n_pings = rng.poisson(config.pings_per_borrower, size=n)
    for i, (ln, k) in enumerate(zip(loans, n_pings.tolist())):
        lo, hi = max(ws, ln.contract_time), min(we, ln.contract_time + timedelta(days=366))
        which = (rng.random(k) >= 0.6).astype(int)
        jit = rng.normal(0.0, config.anchor_jitter_m, size=(k, 2))
        plat, plon = _offset(a_lat[i, which], a_lon[i, which], jit[:, 0], jit[:, 1])
        for x, y, t in zip(plat, plon, _uniform_times(rng, lo, hi, k)):
            pings.append(GeoPing(ln.borrower_id, round(float(x), 7), round(float(y), 7), t))
    return pings, pois


def simulate(config: GenConfig) -> SyntheticData:
    """All four tables for one seed; the three generators use separate streams."""
    g_rng, l_rng, geo_rng = _streams(config.seed)
    # contract dates first so every communication lands 0-366 days after them
    cs, ce = parse_timestamp(config.contract_start), parse_timestamp(config.contract_end)
    events, borrowers = generate_comms(config, rng=g_rng)
    stamps = _uniform_times(l_rng, cs, ce, len(borrowers))
    contract = dict(zip(borrowers, stamps))
    ws, we = parse_timestamp(config.study_start), parse_timestamp(config.study_end)
    events = [_retime(ev, contract[ev.borrower_id], ws, we, g_rng) for ev in events]
    edges, _ = aggregate_dyads(events)
    placeholder = [LoanRecord(b, False, 1.0, 0.0, contract[b]) for b in borrowers]
    graph = build_graph(edges, placeholder)
    loans = generate_loans(graph, config, l_rng, contract)
    pings, pois = generate_geo(loans, config, geo_rng)
    return SyntheticData(events, loans, pings, pois, config)


def _retime(ev: CommEvent, contract: datetime, ws: datetime, we: datetime,
            rng: np.random.Generator) -> CommEvent:
    lo, hi = max(ws, contract), min(we, contract + timedelta(days=366))
    if lo <= ev.timestamp <= hi:
        return ev
    return replace(ev, timestamp=_uniform_times(rng, lo, hi, 1)[0])


def write_dataset(data: SyntheticData, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.csv" for name in ("comms", "loans", "pings", "pois")}
    write_comms(paths["comms"], data.events)
    write_loans(paths["loans"], data.loans)
    write_pings(paths["pings"], data.pings)
    write_pois(paths["pois"], data.pois)
    return paths
