"""Weighted directed communication graph and per-borrower metrics.

Edges are kept as a sparse directed weight matrix. Triads, eigenvector
centrality and farness all work on the undirected projection, where the two
directions of a dyad are merged (weights summed).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.sparse import csgraph

from .ingest import EdgeRecord, LoanRecord

log = logging.getLogger(__name__)

METRIC_COLUMNS = ["out_edges", "in_edges", "triads", "eigen", "farness", "dur"]


class ConvergenceError(RuntimeError):
    """Power iteration hit ``max_iter``; ``delta`` is the last L2 step size."""

    def __init__(self, msg, delta):
        super().__init__(msg)
        self.delta = delta


@dataclass
class CommGraph:
    nodes: list[str]
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    borrowers: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.index = {v: i for i, v in enumerate(self.nodes)}
        n = len(self.nodes)
        self.W = sp.csr_matrix((self.weight, (self.src, self.dst)), shape=(n, n))
        self.W.sum_duplicates()
        if self.W.nnz != len(self.src):
            raise ValueError("duplicate (src, dst) pairs in edge list")
        self.WT = self.W.T.tocsr()
        self.borrower_index = np.array([self.index[b] for b in self.borrowers], dtype=int)
        self._und = {}

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def node_id(self, node) -> int:
        try:
            return self.index[node]
        except KeyError:
            raise KeyError(f"unknown node {node!r}") from None

    def undirected(self, weighted: bool = False) -> sp.csr_matrix:
        """Symmetric adjacency of the undirected projection (cached)."""
        if weighted not in self._und:
            if weighted:
                A = (self.W + self.W.T).tocsr()
            else:
                B = self.W.copy()
                B.data = np.ones_like(B.data)
                A = B + B.T
                A.data = np.ones_like(A.data)
            A.eliminate_zeros()
            self._und[weighted] = A
        return self._und[weighted]

    def components(self) -> tuple[int, np.ndarray]:
        """Weakly connected components (labels over node order)."""
        return csgraph.connected_components(self.undirected(), directed=False)

    def reversed(self) -> "CommGraph":
        return CommGraph(self.nodes, self.dst.copy(), self.src.copy(), self.weight.copy(),
                         list(self.borrowers))


@dataclass(frozen=True)
class BorrowerGraphMetrics:
    out_edges: int
    in_edges: int
    triads: int
    eigen: float
    farness: float
    dur: float


def build_graph(edges: Sequence[EdgeRecord], loans: Iterable[LoanRecord] = ()) -> CommGraph:
    """Index an aggregated edge list; loan holders are flagged as borrowers.

    Borrowers that never appear in an edge are added as isolated nodes and a
    warning is recorded on the graph.
    """
    names = set()
    for e in edges:
        names.add(e.src)
        names.add(e.dst)
    borrower_ids = sorted({ln.borrower_id for ln in loans})
    warnings = []
    for b in borrower_ids:
        if b not in names:
            warnings.append(f"borrower {b} has no communications; added as isolated node")
            names.add(b)
    nodes = sorted(names)
    index = {v: i for i, v in enumerate(nodes)}
    m = len(edges)
    src = np.fromiter((index[e.src] for e in edges), dtype=np.int64, count=m)
    dst = np.fromiter((index[e.dst] for e in edges), dtype=np.int64, count=m)
    w = np.fromiter((e.weight_s for e in edges), dtype=float, count=m)
    if np.any(src == dst):
        raise ValueError("self-loop in edge list")
    for msg in warnings:
        log.warning(msg)
    return CommGraph(nodes, src, dst, w, borrower_ids, warnings)


# --------------------------------------------------------------------------
# degrees and triads

def degree_metrics(g: CommGraph, node) -> tuple[int, int, float]:
    """(distinct out-neighbours, distinct in-neighbours, incident weight)."""
    i = g.node_id(node)
    W = g.W
    out_row = W.getrow(i)
    in_row = g.WT.getrow(i)
    return int(out_row.nnz), int(in_row.nnz), float(out_row.sum() + in_row.sum())


def degree_arrays(g: CommGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    W = g.W
    out_deg = np.diff(W.indptr)
    in_deg = np.bincount(W.indices, minlength=g.n_nodes)
    dur = np.asarray(W.sum(axis=1)).ravel() + np.asarray(W.sum(axis=0)).ravel()
    return out_deg, in_deg, dur


def triad_count(g: CommGraph, node) -> int:
    """Closed triangles through ``node`` in the undirected projection."""
    A = g.undirected()
    i = g.node_id(node)
    nbrs = A.indices[A.indptr[i]:A.indptr[i + 1]]
    nbr_set = set(nbrs.tolist())
    links = 0
    for j in nbrs:
        row = A.indices[A.indptr[j]:A.indptr[j + 1]]
        links += sum(1 for k in row if k in nbr_set)
    return links // 2


def triad_counts(g: CommGraph) -> np.ndarray:
    A = g.undirected().astype(np.int64)
    paths = (A @ A).multiply(A)
    return np.asarray(paths.sum(axis=1)).ravel() // 2


def triangle_total(g: CommGraph) -> int:
    A = g.undirected().astype(np.int64)
    return int((A @ A).multiply(A).sum()) // 6


# --------------------------------------------------------------------------
# eigenvector centrality

def eigenvector_centrality(g: CommGraph, weighted: bool = True, tol: float = 1e-10,
                           max_iter: int = 1000) -> np.ndarray:
    """Principal eigenvector of the undirected projection, per component.

    Every component with at least one edge gets its own unit-L2 eigenvector
    (all entries positive); isolated nodes get 0. Iterates ``A v + s v``
    with a per-component shift ``s`` equal to half the mean weighted degree,
    which keeps bipartite components (stars, paths) from oscillating without
    changing the eigenvectors.
    """
    if g.n_nodes == 0:
        raise ValueError("empty graph")
    A = g.undirected(weighted=weighted)
    n_comp, labels = g.components()
    deg = np.asarray(A.sum(axis=1)).ravel()
    size = np.bincount(labels, minlength=n_comp).astype(float)
    comp_deg = np.bincount(labels, weights=deg, minlength=n_comp)
    live_comp = comp_deg > 0
    live = live_comp[labels]
    if not live.any():
        return np.zeros(g.n_nodes)

    shift = np.where(live_comp, 0.5 * comp_deg / size, 0.0)[labels]
    v = np.where(live, 1.0, 0.0)
    norms = np.sqrt(np.bincount(labels, weights=v * v, minlength=n_comp))
    v = v / np.where(norms > 0, norms, 1.0)[labels]

    delta = np.inf
    for _ in range(max_iter):
        y = A @ v + shift * v
        norms = np.sqrt(np.bincount(labels, weights=y * y, minlength=n_comp))
        y = y / np.where(norms > 0, norms, 1.0)[labels]
        step = np.sqrt(np.bincount(labels, weights=(y - v) ** 2, minlength=n_comp))
        delta = float(step.max())
        v = y
        if delta < tol:
            return v
    raise ConvergenceError(
        f"eigenvector centrality did not converge in {max_iter} iterations "
        f"(last delta {delta:.3g})", delta)


# --------------------------------------------------------------------------
# farness

def farness_many(g: CommGraph, nodes: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Mean hop distance to every other node of the same component, by BFS."""
    A = g.undirected()
    out = np.zeros(len(nodes))
    for start in range(0, len(nodes), chunk):
        idx = nodes[start:start + chunk]
        if len(idx) == 0:
            continue
        dist = csgraph.shortest_path(A, method="D", directed=False, unweighted=True,
                                     indices=idx)
        finite = np.isfinite(dist)
        reach = finite.sum(axis=1) - 1
        total = np.where(finite, dist, 0.0).sum(axis=1)
        out[start:start + len(idx)] = np.where(reach > 0, total / np.maximum(reach, 1), 0.0)
    return out


def farness_centrality(g: CommGraph, node) -> float:
    i = g.node_id(node)
    return float(farness_many(g, np.array([i]))[0])


# --------------------------------------------------------------------------
# metric table

def node_metrics(g: CommGraph, node, eigen: np.ndarray | None = None,
                 weighted: bool = True) -> BorrowerGraphMetrics:
    if eigen is None:
        eigen = eigenvector_centrality(g, weighted=weighted)
    out_e, in_e, dur = degree_metrics(g, node)
    i = g.node_id(node)
    return BorrowerGraphMetrics(out_e, in_e, triad_count(g, node), float(eigen[i]),
                                farness_centrality(g, node), dur)


def metrics_table(g: CommGraph, weighted_eigen: bool = True, tol: float = 1e-10,
                  max_iter: int = 1000) -> pd.DataFrame:
    """One row of graph metrics per borrower, sorted by borrower id."""
    cols = ["borrower_id"] + METRIC_COLUMNS
    if len(g.borrowers) == 0:
        return pd.DataFrame(columns=cols)
    idx = g.borrower_index
    out_deg, in_deg, dur = degree_arrays(g)
    eig = eigenvector_centrality(g, weighted=weighted_eigen, tol=tol, max_iter=max_iter)
    tri = triad_counts(g)
    far = farness_many(g, idx)
    return pd.DataFrame({
        "borrower_id": [g.nodes[i] for i in idx],
        "out_edges": out_deg[idx].astype(np.int64),
        "in_edges": in_deg[idx].astype(np.int64),
        "triads": tri[idx].astype(np.int64),
        "eigen": eig[idx],
        "farness": far,
        "dur": dur[idx],
    }, columns=cols)
