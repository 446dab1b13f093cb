"""GPS pings to business-proximity counts.

POIs are bucketed into a uniform lat/lon grid whose cells are at least
``cell_size_m`` wide everywhere in the indexed latitude band, so any point
within that distance of a query lies in the query's 3x3 cell neighbourhood.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .ingest import IngestError, LoanRecord, format_timestamp, parse_timestamp

EARTH_RADIUS_M = 6_371_000.0
M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0
MAX_DIFF_DAYS = 366.0

PINGS_HEADER = ["borrower_id", "lat", "lon", "timestamp_iso8601"]
POIS_HEADER = ["category", "lat", "lon"]


class GeoDomainError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class GeoPing:
    borrower_id: str
    lat: float
    lon: float
    timestamp: datetime


@dataclass(frozen=True, slots=True)
class PoiEntry:
    category: str
    lat: float
    lon: float


def load_vocabulary(path: str | Path | None = None) -> list[str]:
    if path is None:
        text = resources.files("lendgraph.data").joinpath("vocabulary.txt").read_text()
    else:
        text = Path(path).read_text()
    vocab = [line.strip() for line in text.splitlines() if line.strip()]
    if len(set(vocab)) != len(vocab):
        raise ValueError("duplicate categories in vocabulary")
    return vocab


def _check_coords(lat, lon):
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if np.any(~np.isfinite(lat)) or np.any(np.abs(lat) > 90):
        raise GeoDomainError("latitude outside [-90, 90]")
    if np.any(~np.isfinite(lon)) or np.any(np.abs(lon) > 180):
        raise GeoDomainError("longitude outside [-180, 180]")
    return lat, lon


def haversine(p, q):
    """Great-circle distance in metres between (lat, lon) pairs; broadcasts."""
    lat1, lon1 = _check_coords(*p)
    lat2, lon2 = _check_coords(*q)
    return _haversine(lat1, lon1, lat2, lon2)


def _haversine(lat1, lon1, lat2, lon2):
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(lon2 - lon1)
    a = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    d = 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    return d if np.ndim(d) else float(d)


class GridIndex:
    """Uniform lat/lon bucket grid over POIs, queried through 3x3 neighbourhoods."""

    def __init__(self, pois: Sequence[PoiEntry], vocabulary: Sequence[str],
                 cell_size_m: float = 100.0):
        self.vocabulary = list(vocabulary)
        self.code = {c: i for i, c in enumerate(self.vocabulary)}
        self.cell_size_m = float(cell_size_m)
        lat = np.array([p.lat for p in pois], dtype=float)
        lon = np.array([p.lon for p in pois], dtype=float)
        _check_coords(lat, lon)
        try:
            cat = np.array([self.code[p.category] for p in pois], dtype=np.int64)
        except KeyError as exc:
            raise IngestError(f"unknown POI category {exc.args[0]!r}") from None

        self.dlat = self.cell_size_m / M_PER_DEG
        # widest |lat| any query can reach determines the narrowest lon cell
        band = (np.abs(lat).max() if lat.size else 0.0) + 2 * self.dlat
        self.max_abs_lat = min(band, 89.9)
        min_width = self.cell_size_m / (M_PER_DEG * math.cos(math.radians(self.max_abs_lat)))
        self.n_lon = max(1, int(360.0 // min_width)) if min_width < 360 else 1
        self.dlon = 360.0 / self.n_lon

        self.lat, self.lon, self.cat = lat, lon, cat
        ci, cj = self._cell(lat, lon)
        order = np.lexsort((cj, ci))
        self._order = order
        keys = ci[order] * self.n_lon + cj[order]
        uniq, start = np.unique(keys, return_index=True)
        stop = np.append(start[1:], len(keys))
        self._cells = {int(k): (int(a), int(b)) for k, a, b in zip(uniq, start, stop)}

    def __len__(self):
        return len(self.lat)

    def _cell(self, lat, lon):
        ci = np.floor((np.asarray(lat) + 90.0) / self.dlat).astype(np.int64)
        cj = np.floor((np.asarray(lon) + 180.0) / self.dlon).astype(np.int64) % self.n_lon
        return ci, cj

    def candidates(self, lat: float, lon: float) -> np.ndarray:
        """POI positions in the 3x3 neighbourhood of the query's cell."""
        ci, cj = self._cell(lat, lon)
        ci, cj = int(ci), int(cj)
        parts = []
        cols = {(cj + dj) % self.n_lon for dj in (-1, 0, 1)}
        for di in (-1, 0, 1):
            for j in cols:
                span = self._cells.get((ci + di) * self.n_lon + j)
                if span is not None:
                    parts.append(self._order[span[0]:span[1]])
        if not parts:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(parts)

    def counts(self, lat: float, lon: float, radius_m: float = 50.0) -> np.ndarray:
        """Per-category POI counts within ``radius_m`` (boundary inclusive)."""
        if radius_m > self.cell_size_m:
            raise ValueError(f"radius {radius_m} m exceeds index cell size {self.cell_size_m} m")
        if abs(lat) > self.max_abs_lat and len(self):
            # beyond the band the grid was sized for; fall back to a full scan
            return brute_force_counts(self, lat, lon, radius_m)
        idx = self.candidates(lat, lon)
        out = np.zeros(len(self.vocabulary), dtype=np.int64)
        if idx.size:
            d = _haversine(lat, lon, self.lat[idx], self.lon[idx])
            np.add.at(out, self.cat[idx[d <= radius_m]], 1)
        return out

    def counts_many(self, lat, lon, radius_m: float = 50.0) -> np.ndarray:
        """Row-wise :meth:`counts` for arrays of query points.

        Queries sharing a grid cell share one candidate gather, so the cost
        is one vectorised distance block per occupied query cell.
        """
        if radius_m > self.cell_size_m:
            raise ValueError(f"radius {radius_m} m exceeds index cell size {self.cell_size_m} m")
        lat, lon = _check_coords(np.atleast_1d(lat), np.atleast_1d(lon))
        out = np.zeros((len(lat), len(self.vocabulary)), dtype=np.int64)
        if not len(self) or not len(lat):
            return out
        far = np.abs(lat) > self.max_abs_lat
        for r in np.flatnonzero(far):
            out[r] = brute_force_counts(self, lat[r], lon[r], radius_m)
        near = np.flatnonzero(~far)
        ci, cj = self._cell(lat[near], lon[near])
        keys = ci * self.n_lon + cj
        order = np.argsort(keys, kind="stable")
        uniq, start = np.unique(keys[order], return_index=True)
        stop = np.append(start[1:], len(order))
        for a, b in zip(start, stop):
            rows = near[order[a:b]]
            idx = self.candidates(lat[rows[0]], lon[rows[0]])
            if not idx.size:
                continue
            d = _haversine(lat[rows, None], lon[rows, None], self.lat[idx][None, :],
                           self.lon[idx][None, :])
            hit_r, hit_c = np.nonzero(d <= radius_m)
            np.add.at(out, (rows[hit_r], self.cat[idx[hit_c]]), 1)
        return out


def build_spatial_index(pois: Sequence[PoiEntry], cell_size_m: float = 100.0,
                        vocabulary: Sequence[str] | None = None) -> GridIndex:
    return GridIndex(pois, load_vocabulary() if vocabulary is None else vocabulary,
                     cell_size_m)


def brute_force_counts(index: GridIndex, lat: float, lon: float,
                       radius_m: float = 50.0) -> np.ndarray:
    out = np.zeros(len(index.vocabulary), dtype=np.int64)
    if len(index):
        d = _haversine(lat, lon, index.lat, index.lon)
        np.add.at(out, index.cat[d <= radius_m], 1)
    return out


def poi_counts(ping: GeoPing, index: GridIndex, radius_m: float = 50.0) -> dict[str, int]:
    _check_coords(ping.lat, ping.lon)
    c = index.counts(ping.lat, ping.lon, radius_m)
    return {cat: int(v) for cat, v in zip(index.vocabulary, c)}


def diff_day(ping: GeoPing, loan: LoanRecord) -> float:
    """Fractional days from the loan contract to the ping."""
    if ping.borrower_id != loan.borrower_id:
        raise ValueError("ping and loan belong to different borrowers")
    return (ping.timestamp - loan.contract_time).total_seconds() / 86400.0


def in_window(days: float, tol_days: float = 1e-9) -> bool:
    return -tol_days <= days <= MAX_DIFF_DAYS + tol_days


def location_features(pings: Sequence[GeoPing], index: GridIndex,
                      loans: Iterable[LoanRecord], radius_m: float = 50.0,
                      per_borrower: bool = False) -> tuple[pd.DataFrame, dict]:
    """Per-ping (or per-borrower mean) category counts plus ``diff_day``.

    Pings of unknown borrowers or outside the 0-366 day window are dropped
    and counted in the returned report.
    """
    by_id = {ln.borrower_id: ln for ln in loans}
    report = {"pings": len(pings), "unknown_borrower": 0, "out_of_window": 0}
    keep: list[GeoPing] = []
    days: list[float] = []
    for p in pings:
        loan = by_id.get(p.borrower_id)
        if loan is None:
            report["unknown_borrower"] += 1
            continue
        dd = diff_day(p, loan)
        if not in_window(dd):
            report["out_of_window"] += 1
            continue
        keep.append(p)
        days.append(dd)
    report["kept"] = len(keep)

    counts = index.counts_many(np.array([p.lat for p in keep], dtype=float),
                               np.array([p.lon for p in keep], dtype=float), radius_m)
    df = pd.DataFrame(counts, columns=index.vocabulary)
    df.insert(0, "diff_day", np.array(days, dtype=float))
    df.insert(0, "timestamp", [format_timestamp(p.timestamp) for p in keep])
    df.insert(0, "borrower_id", [p.borrower_id for p in keep])
    if per_borrower:
        num = df.drop(columns=["timestamp"]).groupby("borrower_id", sort=True).mean()
        first = df.groupby("borrower_id", sort=True)["timestamp"].min()
        num.insert(0, "timestamp", first)
        df = num.reset_index()
    return df, report


# --------------------------------------------------------------------------
# CSV I/O

def read_pings(path) -> list[GeoPing]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if list(reader.fieldnames or []) != PINGS_HEADER:
            raise IngestError(f"{path}: header {reader.fieldnames} != {PINGS_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            try:
                lat, lon = float(row["lat"]), float(row["lon"])
                _check_coords(lat, lon)
                out.append(GeoPing(row["borrower_id"].strip(), lat, lon,
                                   parse_timestamp(row["timestamp_iso8601"])))
            except (ValueError, KeyError) as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from None
    return out


def read_pois(path, vocabulary: Sequence[str]) -> tuple[list[PoiEntry], dict[str, int]]:
    """Load POIs; unknown categories are rejected and counted."""
    vocab = set(vocabulary)
    out, rejected = [], {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if list(reader.fieldnames or []) != POIS_HEADER:
            raise IngestError(f"{path}: header {reader.fieldnames} != {POIS_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            cat = row["category"].strip()
            if cat not in vocab:
                rejected[cat] = rejected.get(cat, 0) + 1
                continue
            try:
                lat, lon = float(row["lat"]), float(row["lon"])
                _check_coords(lat, lon)
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from None
            out.append(PoiEntry(cat, lat, lon))
    return out, rejected


def write_pings(path, pings: Iterable[GeoPing]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PINGS_HEADER)
        for p in pings:
            w.writerow([p.borrower_id, f"{p.lat:.7f}", f"{p.lon:.7f}",
                        format_timestamp(p.timestamp)])


def write_pois(path, pois: Iterable[PoiEntry]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POIS_HEADER)
        for p in pois:
            w.writerow([p.category, f"{p.lat:.7f}", f"{p.lon:.7f}"])
