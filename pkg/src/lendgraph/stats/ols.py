"""QR least squares with R-style collinearity handling and influence measures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg, stats

INTERCEPT = "(Intercept)"


class InsufficientDataError(ValueError):
    pass


def _as_design(X, names=None, intercept=True) -> tuple[np.ndarray, list[str]]:
    if isinstance(X, pd.DataFrame):
        names = [str(c) for c in X.columns]
        X = X.to_numpy(dtype=float)
    else:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if names is None:
            names = [f"x{j}" for j in range(X.shape[1])]
    names = list(names)
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X]) if X.size else np.ones((X.shape[0], 1))
        names = [INTERCEPT] + names
    return X, names


def stars(p: float) -> str:
    if not np.isfinite(p):
        return ""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    if p < 0.1:
        return "."
    return ""


def _qr_keep(X: np.ndarray, tol: float = 1e-7):
    """Drop, in order, columns in the span of the columns kept before them.

    Returns (kept indices, Q, R) of the final reduced QR; when nothing is
    dropped this costs a single factorisation.
    """
    norms = np.linalg.norm(X, axis=0)
    keep = [j for j in range(X.shape[1]) if norms[j] > 0]
    while True:
        if not keep:
            return keep, np.empty((X.shape[0], 0)), np.empty((0, 0))
        Q, R = np.linalg.qr(X[:, keep], mode="reduced")
        diag = np.abs(np.diag(R))
        bad = np.flatnonzero(diag <= tol * norms[keep])
        if bad.size == 0:
            return keep, Q, R
        del keep[bad[0]]


def ols_coef(X, y, intercept: bool = True, tol: float = 1e-7) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients only, from the R factor of ``[X | y]`` (no Q is formed).

    Returns (kept design-column indices, coefficients); the column dropping
    rule matches :func:`ols_fit`. The intercept, if any, is column 0.
    """
    Xd, _ = _as_design(X, None, intercept)
    y = np.asarray(y, dtype=float).ravel()
    norms = np.linalg.norm(Xd, axis=0)
    keep = [j for j in range(Xd.shape[1]) if norms[j] > 0]
    while True:
        R = np.linalg.qr(np.column_stack([Xd[:, keep], y]), mode="r")
        p = len(keep)
        diag = np.abs(np.diag(R)[:p])
        bad = np.flatnonzero(diag <= tol * norms[keep])
        if bad.size == 0:
            return np.array(keep, dtype=np.int64), linalg.solve_triangular(R[:p, :p], R[:p, p])
        del keep[bad[0]]


def independent_columns(X: np.ndarray, tol: float = 1e-7) -> list[int]:
    """Column indices kept after dropping, in order, any column that lies
    in the span of the columns kept before it."""
    return _qr_keep(np.asarray(X, dtype=float), tol)[0]


@dataclass
class OlsFit:
    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    tvalues: np.ndarray
    pvalues: np.ndarray
    r2: float
    adj_r2: float
    fvalue: float
    f_df: tuple[int, int]
    f_pvalue: float
    resid: np.ndarray
    fitted: np.ndarray
    hat: np.ndarray
    rss: float
    n: int
    dropped: list[str] = field(default_factory=list)
    all_names: list[str] = field(default_factory=list)
    degenerate_response: bool = False
    R: np.ndarray | None = field(default=None, repr=False)

    @property
    def p(self) -> int:
        """Number of estimated coefficients (intercept included)."""
        return len(self.coef)

    @property
    def df_resid(self) -> int:
        return self.n - self.p

    @property
    def sigma2(self) -> float:
        return self.rss / self.df_resid if self.df_resid > 0 else np.nan

    @property
    def loglik(self) -> float:
        """Gaussian log-likelihood at the MLE variance RSS/n."""
        n = self.n
        return -0.5 * n * (np.log(2 * np.pi) + np.log(self.rss / n) + 1.0)

    @property
    def aic(self) -> float:
        # coefficients plus the error variance
        return 2 * (self.p + 1) - 2 * self.loglik

    def coef_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.coef.tolist()))

    def predict(self, X, names=None, intercept=True) -> np.ndarray:
        Xd, names = _as_design(X, names, intercept=intercept)
        pos = {nm: j for j, nm in enumerate(names)}
        cols = [pos[nm] for nm in self.names]
        return Xd[:, cols] @ self.coef

    def table(self) -> pd.DataFrame:
        """Coefficient table; dropped collinear predictors appear as NA rows."""
        rows = {nm: (b, s, t, p, stars(p)) for nm, b, s, t, p in
                zip(self.names, self.coef, self.se, self.tvalues, self.pvalues)}
        order = self.all_names or self.names
        data = [rows.get(nm, (np.nan, np.nan, np.nan, np.nan, "")) for nm in order]
        return pd.DataFrame(data, index=order,
                            columns=["estimate", "std_error", "t", "p", "stars"])

    def to_dict(self) -> dict:
        tab = self.table()
        coefs = []
        for nm, row in tab.iterrows():
            coefs.append({
                "predictor": nm,
                "estimate": None if np.isnan(row.estimate) else float(row.estimate),
                "std_error": None if np.isnan(row.std_error) else float(row.std_error),
                "t": None if np.isnan(row.t) else float(row.t),
                "p": None if np.isnan(row.p) else float(row.p),
                "stars": row.stars,
            })
        return {
            "n": self.n,
            "r_squared": self.r2,
            "adj_r_squared": self.adj_r2,
            "f_statistic": None if np.isnan(self.fvalue) else self.fvalue,
            "f_df": list(self.f_df),
            "f_pvalue": None if np.isnan(self.f_pvalue) else self.f_pvalue,
            "aic": self.aic,
            "dropped": list(self.dropped),
            "degenerate_response": self.degenerate_response,
            "coefficients": coefs,
        }


def ols_fit(X, y, names=None, intercept: bool = True, tol: float = 1e-7) -> OlsFit:
    """Least squares via Householder QR.

    Columns in the span of earlier columns are dropped and reported, like R's
    ``lm`` (they show as NA in :meth:`OlsFit.table`). ``n <= p`` raises
    :class:`InsufficientDataError`.
    """
    Xd, all_names = _as_design(X, names, intercept)
    y = np.asarray(y, dtype=float).ravel()
    n = Xd.shape[0]
    if y.shape[0] != n:
        raise ValueError("X and y have different row counts")
    if n <= Xd.shape[1]:
        raise InsufficientDataError(f"n={n} observations for {Xd.shape[1]} coefficients")
    keep, Q, R = _qr_keep(Xd, tol)
    if n <= len(keep):
        raise InsufficientDataError(f"n={n} observations for {len(keep)} coefficients")
    dropped = [all_names[j] for j in range(len(all_names)) if j not in set(keep)]
    names_k = [all_names[j] for j in keep]

    qty = Q.T @ y
    coef = linalg.solve_triangular(R, qty)
    fitted = Q @ qty
    resid = y - fitted
    rss = float(resid @ resid)
    p = len(keep)
    df_resid = n - p
    sigma2 = rss / df_resid
    Rinv = linalg.solve_triangular(R, np.eye(p))
    se = np.sqrt(np.sum(Rinv ** 2, axis=1) * sigma2)
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = coef / se
    pvals = 2 * stats.t.sf(np.abs(tvals), df_resid)
    hat = np.sum(Q ** 2, axis=1)

    has_icpt = INTERCEPT in names_k
    if has_icpt:
        tss = float(np.sum((y - y.mean()) ** 2))
    else:
        tss = float(y @ y)
    degenerate = tss <= 0
    k = p - 1 if has_icpt else p
    if degenerate or (has_icpt and k == 0):
        # intercept-only fits explain nothing by definition
        r2 = adj = 0.0
    else:
        r2 = max(0.0, 1.0 - rss / tss)
        denom = n - 1 if has_icpt else n
        adj = 1.0 - (1.0 - r2) * denom / df_resid
    if k > 0 and not degenerate and rss > 0:
        fval = (max(tss - rss, 0.0) / k) / (rss / df_resid)
        fp = float(stats.f.sf(fval, k, df_resid))
    else:
        fval, fp = np.nan, np.nan
    return OlsFit(names_k, coef, se, tvals, pvals, r2, adj, float(fval), (k, df_resid), fp,
                  resid, fitted, hat, rss, n, dropped, all_names, degenerate, R)


@dataclass
class CooksVector:
    distance: np.ndarray
    infinite: np.ndarray

    def top(self, k: int) -> np.ndarray:
        """Indices of the ``k`` largest distances, largest first."""
        d = np.where(self.infinite, np.inf, self.distance)
        return np.argsort(-d, kind="stable")[:k]


def cooks_distance(fit: OlsFit) -> CooksVector:
    """``D_i = e_i^2 h_i / (p s^2 (1 - h_i)^2)``; exact-leverage points are flagged."""
    h = fit.hat
    e = fit.resid
    s2 = fit.sigma2
    lev = np.isclose(h, 1.0, rtol=0, atol=1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (e ** 2 / (fit.p * s2)) * (h / (1.0 - h) ** 2)
    d = np.where(lev, np.inf, d)
    return CooksVector(d, lev)
