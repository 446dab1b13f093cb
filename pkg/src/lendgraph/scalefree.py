"""Power-law fits of degree distributions and their stability under node removal."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .graph import CommGraph


class PowerLawError(ValueError):
    pass


class InsufficientDataError(PowerLawError):
    pass


class DegenerateFitError(PowerLawError):
    pass


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    xmin: int
    n_tail: int
    ks_stat: float

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "xmin": self.xmin, "n_tail": self.n_tail,
                "ks_stat": self.ks_stat}


def _degrees(src: np.ndarray, dst: np.ndarray, n: int, mode: str) -> np.ndarray:
    out_deg = np.bincount(src, minlength=n)
    in_deg = np.bincount(dst, minlength=n)
    if mode == "out":
        return out_deg
    if mode == "in":
        return in_deg
    if mode == "total":
        return out_deg + in_deg
    raise ValueError(f"mode must be total, in or out, got {mode!r}")


def node_degrees(g: CommGraph, mode: str = "total") -> np.ndarray:
    return _degrees(g.src, g.dst, g.n_nodes, mode)


def degree_distribution(g: CommGraph, mode: str = "total") -> dict[int, int]:
    """Histogram degree -> number of nodes (isolated nodes appear under 0)."""
    if g.n_nodes == 0:
        raise ValueError("empty graph")
    hist = Counter(node_degrees(g, mode).tolist())
    return dict(sorted(hist.items()))


def _alpha(sum_log: float, n_tail: int) -> float:
    return 1.0 + n_tail / sum_log


def _ks(tail_sorted: np.ndarray, xmin: float, alpha: float, shift: float) -> float:
    # compare P(X >= u) at every distinct tail value u
    u, first = np.unique(tail_sorted, return_index=True)
    emp = 1.0 - first / len(tail_sorted)
    fit = ((u - shift) / (xmin - shift)) ** (1.0 - alpha)
    return float(np.max(np.abs(emp - fit)))


def fit_power_law(degrees, xmin: int | None = None, discrete_shift: bool = True,
                  min_tail: int = 50) -> PowerLawFit:
    """Continuous-approximation MLE of a power-law tail.

    ``alpha = 1 + n / sum(log(x / (xmin - 0.5)))`` over ``x >= xmin``; the 0.5
    shift is dropped when ``discrete_shift`` is False. Without ``xmin``
    every observed value with at least ``min_tail`` observations at or
    above it is tried and the one with the smallest Kolmogorov-Smirnov
    distance wins. If no value leaves that many, the smallest value is used.
    """
    x = np.sort(np.asarray(degrees, dtype=float).ravel())
    if x.size and x[0] <= 0:
        raise PowerLawError("degrees must be positive")
    shift = 0.5 if discrete_shift else 0.0

    if xmin is not None:
        if xmin - shift <= 0:
            raise PowerLawError("xmin must exceed the discreteness shift")
        tail = x[x >= xmin]
        if tail.size < 2:
            raise InsufficientDataError(f"only {tail.size} observations >= xmin={xmin}")
        if tail[0] == tail[-1]:
            raise DegenerateFitError("all tail values equal; exponent is unbounded")
        sum_log = float(np.sum(np.log(tail / (xmin - shift))))
        alpha = _alpha(sum_log, tail.size)
        return PowerLawFit(alpha, int(xmin), int(tail.size), _ks(tail, xmin, alpha, shift))

    if x.size < 2:
        raise InsufficientDataError(f"only {x.size} observations")
    if x[0] == x[-1]:
        raise DegenerateFitError("all values equal; exponent is unbounded")

    logs = np.log(x)
    suffix = np.cumsum(logs[::-1])[::-1]
    values, first = np.unique(x, return_index=True)
    n_tail = x.size - first
    ok = (n_tail >= min_tail) & (values < x[-1])
    if not ok.any():
        ok = np.zeros_like(ok)
        ok[0] = True
    best = None
    for v, i, nt in zip(values[ok], first[ok], n_tail[ok]):
        if v - shift <= 0:
            continue
        sum_log = suffix[i] - nt * np.log(v - shift)
        alpha = _alpha(sum_log, int(nt))
        ks = _ks(x[i:], v, alpha, shift)
        if best is None or ks < best.ks_stat:
            best = PowerLawFit(float(alpha), int(v), int(nt), ks)
    if best is None:
        raise InsufficientDataError("no admissible xmin")
    return best


def perturb_exponent(g: CommGraph, removal_fraction: float, trials: int, seed: int,
                     mode: str = "total", **fit_kw) -> list[float | None]:
    """Refit the exponent after deleting a uniform random node subset.

    Trial ``t`` draws from ``default_rng([seed, t])`` so trials are
    independent of each other and of the trial count. Trials whose refit is
    degenerate yield ``None``.
    """
    if not 0 < removal_fraction < 1:
        raise ValueError("removal_fraction must lie in (0, 1)")
    n = g.n_nodes
    k = int(round(removal_fraction * n))
    alphas: list[float | None] = []
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        keep = np.ones(n, dtype=bool)
        if k:
            keep[rng.choice(n, size=k, replace=False)] = False
        e = keep[g.src] & keep[g.dst]
        deg = _degrees(g.src[e], g.dst[e], n, mode)
        deg = deg[keep & (deg > 0)]
        try:
            alphas.append(fit_power_law(deg, **fit_kw).alpha)
        except PowerLawError:
            alphas.append(None)
    return alphas
