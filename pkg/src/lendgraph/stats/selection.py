"""AIC model selection, k-fold cross-validation and nested-model ladders."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import linalg

from .ols import INTERCEPT, OlsFit, _as_design, ols_coef, ols_fit


def gaussian_aic(rss: float, n: int, n_coef: int) -> float:
    """``2k - 2 ln L`` for a Gaussian linear model with ``n_coef`` coefficients.

    ``k`` counts the error variance as well; the constant terms cancel in any
    comparison on the same rows.
    """
    loglik = -0.5 * n * (np.log(2 * np.pi) + np.log(rss / n) + 1.0)
    return 2 * (n_coef + 1) - 2 * loglik


def relative_likelihood(aic1: float, aic2: float) -> float:
    """``exp((aic1 - aic2) / 2)``."""
    if not (np.isfinite(aic1) and np.isfinite(aic2)):
        raise ValueError("AIC values must be finite")
    return float(np.exp((aic1 - aic2) / 2.0))


@dataclass
class StepwiseResult:
    selected: list[str]
    fit: OlsFit
    initial_aic: float
    trace: list[dict] = field(default_factory=list)

    @property
    def aic(self) -> float:
        return self.trace[-1]["aic"] if self.trace else self.initial_aic

    @property
    def removed(self) -> list[str]:
        return [t["feature"] for t in self.trace if t["action"] == "remove"]

    def to_dict(self) -> dict:
        return {"selected": list(self.selected), "initial_aic": self.initial_aic,
                "final_aic": self.aic, "trace": list(self.trace), "fit": self.fit.to_dict()}


def _frame(X) -> pd.DataFrame:
    if isinstance(X, pd.DataFrame):
        return X
    X = np.asarray(X, dtype=float)
    return pd.DataFrame(X, columns=[f"x{j}" for j in range(X.shape[1])])


def stepwise_aic(X, y, direction: str = "backward", tol: float = 1e-7,
                 max_steps: int | None = None) -> StepwiseResult:
    """Greedy single-feature AIC descent.

    Backward starts from all columns and removes; forward starts from the
    intercept and adds. Each step takes the move with the lowest AIC, ties
    going to the lexicographically smallest feature name, and stops when no
    move lowers AIC. Candidate RSS values use the closed-form one-column
    update; backward steps then downdate the triangular factor instead of
    refitting, forward steps cost one QR of the current design.
    """
    Xf = _frame(X)
    y = np.asarray(y, dtype=float).ravel()
    n = len(y)
    names = [str(c) for c in Xf.columns]
    data = Xf.to_numpy(dtype=float)
    col = {nm: j for j, nm in enumerate(names)}

    if direction == "backward":
        current = list(names)
    elif direction == "forward":
        current = []
    else:
        raise ValueError("direction must be 'backward' or 'forward'")

    fit = ols_fit(Xf[current], y) if current else ols_fit(np.empty((n, 0)), y)
    current = [nm for nm in fit.names if nm != INTERCEPT]
    aic = gaussian_aic(fit.rss, n, fit.p)
    initial = aic
    if direction == "backward":
        return _backward(Xf, y, fit, initial, max_steps)
    trace: list[dict] = []
    steps = 0
    while max_steps is None or steps < max_steps:
        steps += 1
        pool = [nm for nm in names if nm not in set(current)]
        if not pool:
            break
        Xd, _ = _as_design(Xf[current] if current else np.empty((n, 0)))
        Q, _ = np.linalg.qr(Xd, mode="reduced")
        C = data[:, [col[nm] for nm in pool]]
        perp = C - Q @ (Q.T @ C)
        pnorm2 = np.sum(perp ** 2, axis=0)
        cnorm2 = np.sum(C ** 2, axis=0)
        gain = (fit.resid @ C) ** 2
        cands: list[tuple[float, str]] = []
        for nm, g, pn, cn in zip(pool, gain, pnorm2, cnorm2):
            if pn <= (tol ** 2) * cn or cn == 0:
                continue
            rss_j = max(fit.rss - g / pn, 0.0)
            if rss_j <= 0:
                continue
            cands.append((gaussian_aic(rss_j, n, fit.p + 1), nm))
        if not cands:
            break
        best_aic, best = min(cands)
        if not best_aic < aic:
            break
        current = [nm for nm in names if nm in set(current) | {best}]
        fit = ols_fit(Xf[current], y)
        aic = gaussian_aic(fit.rss, n, fit.p)
        trace.append({"step": steps, "action": "add", "feature": best, "aic": aic})
    return StepwiseResult(current, fit, initial, trace)


def _backward(Xf: pd.DataFrame, y: np.ndarray, fit: OlsFit, initial: float,
              max_steps: int | None) -> StepwiseResult:
    # Work on the triangular factor of [X | y]: dropping column j leaves a
    # Hessenberg block whose re-triangularisation is O(p^3), independent of n.
    n = len(y)
    names = list(fit.names)
    Xd, _ = _as_design(Xf[[nm for nm in names if nm != INTERCEPT]])
    Raug = np.linalg.qr(np.column_stack([Xd, y]), mode="r")
    aic = initial
    trace: list[dict] = []
    steps = 0
    while (max_steps is None or steps < max_steps) and len(names) > 1:
        steps += 1
        p = len(names)
        R, z = Raug[:p, :p], Raug[:p, p]
        rss = float(Raug[p, p] ** 2)
        coef = linalg.solve_triangular(R, z)
        rinv_diag = np.sum(linalg.solve_triangular(R, np.eye(p)) ** 2, axis=1)
        cands = [(gaussian_aic(rss + coef[j] ** 2 / rinv_diag[j], n, p - 1), nm, j)
                 for j, nm in enumerate(names) if nm != INTERCEPT]
        best_aic, best, j = min(cands)
        if not best_aic < aic:
            break
        Raug = np.linalg.qr(np.delete(Raug, j, axis=1), mode="r")
        del names[j]
        new_rss = float(Raug[p - 1, p - 1] ** 2)
        aic = gaussian_aic(new_rss, n, p - 1)
        trace.append({"step": steps, "action": "remove", "feature": best, "aic": aic})
    current = [nm for nm in names if nm != INTERCEPT]
    final = ols_fit(Xf[current], y) if current else ols_fit(np.empty((n, 0)), y)
    return StepwiseResult(current, final, initial, trace)


@dataclass
class CvResult:
    fold_mse: np.ndarray
    seed: int
    folds: np.ndarray = field(repr=False)

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.fold_mse))

    def to_dict(self) -> dict:
        return {"k": len(self.fold_mse), "seed": self.seed,
                "fold_mse": self.fold_mse.tolist(), "mean_mse": self.mean_mse}


def fold_assignment(n: int, k: int, seed: int) -> np.ndarray:
    """Fold label per row: a seeded permutation cut into ``k`` near-equal parts."""
    if n < k:
        raise ValueError(f"need n >= k, got n={n}, k={k}")
    perm = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=np.int64)
    for f, part in enumerate(np.array_split(perm, k)):
        labels[part] = f
    return labels


def kfold_cv(X, y, k: int = 10, seed: int = 0) -> CvResult:
    """Held-out MSE of OLS over ``k`` seeded folds."""
    Xf = _frame(X)
    y = np.asarray(y, dtype=float).ravel()
    labels = fold_assignment(len(y), k, seed)
    data = Xf.to_numpy(dtype=float)
    n_feat = data.shape[1]
    mse = np.empty(k)
    for f in range(k):
        test = labels == f
        if test.sum() < n_feat:
            warnings.warn(f"fold {f} holds {test.sum()} rows for {n_feat} features",
                          stacklevel=2)
        keep, coef = ols_coef(data[~test], y[~test])
        Xt, _ = _as_design(data[test])
        pred = Xt[:, keep] @ coef
        mse[f] = float(np.mean((y[test] - pred) ** 2))
    return CvResult(mse, seed, labels)


class AlignmentError(ValueError):
    pass


def compare_nested(datasets, model_specs: Mapping[str, Sequence[str]],
                   response: str = "profit") -> pd.DataFrame:
    """Adjusted R^2 of each spec, sorted ascending.

    ``datasets`` is one frame shared by all specs or a mapping spec -> frame;
    in the latter case every frame must have the same rows.
    """
    if isinstance(datasets, pd.DataFrame):
        frames = {name: datasets for name in model_specs}
    else:
        frames = dict(datasets)
        sizes = {name: len(frames[name]) for name in model_specs}
        if len(set(sizes.values())) > 1:
            raise AlignmentError(f"specs fitted on different row counts: {sizes}")
    fits = nested_fits(frames, model_specs, response)
    return ladder_table(fits, model_specs)


def nested_fits(frames: Mapping[str, pd.DataFrame], model_specs: Mapping[str, Sequence[str]],
                response: str = "profit") -> dict[str, OlsFit]:
    out = {}
    for name, cols in model_specs.items():
        df = frames[name]
        y = df[response].to_numpy(dtype=float)
        X = df[list(cols)] if cols else np.empty((len(df), 0))
        out[name] = ols_fit(X, y)
    return out


def ladder_table(fits: Mapping[str, OlsFit], model_specs: Mapping[str, Sequence[str]]
                 ) -> pd.DataFrame:
    """Adjusted-R^2 ladder from already fitted specs, ascending."""
    out = [{"spec": name, "n_predictors": len(model_specs[name]), "n_kept": fit.p - 1,
            "r2": fit.r2, "adj_r2": fit.adj_r2} for name, fit in fits.items()]
    ladder = pd.DataFrame(out, columns=["spec", "n_predictors", "n_kept", "r2", "adj_r2"])
    return ladder.sort_values(["adj_r2", "spec"], kind="stable").reset_index(drop=True)
