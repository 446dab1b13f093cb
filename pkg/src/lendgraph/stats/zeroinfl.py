"""Zero-inflation diagnostics: intercept-only ZIP, Tobit and the Vuong test."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats


class DegenerateDataError(ValueError):
    pass


class DesignError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, grad_norm):
        super().__init__(msg)
        self.grad_norm = grad_norm


def _newton(loglik, grad, hess, theta, max_iter=100, tol=1e-12):
    """Damped Newton ascent with step halving.

    Stops when the Newton decrement ``g' (-H)^-1 g`` falls below
    ``tol * max(1, |loglik|)``. Where ``-H`` is not positive definite a
    scaled gradient step is used instead.
    """
    ll = loglik(theta)
    for it in range(1, max_iter + 1):
        g = grad(theta)
        H = hess(theta)
        try:
            L = np.linalg.cholesky(-H)
            step = np.linalg.solve(L.T, np.linalg.solve(L, g))
        except np.linalg.LinAlgError:
            step = g / max(np.max(np.abs(np.diag(H))), 1.0)
        decrement = float(g @ step)
        if decrement < tol * max(1.0, abs(ll)):
            return theta, ll, it, True
        t = 1.0
        while True:
            cand = theta + t * step
            ll_c = loglik(cand)
            if np.isfinite(ll_c) and ll_c >= ll:
                break
            t *= 0.5
            if t < 1e-10:
                # no ascent left at working precision
                return theta, ll, it, decrement < 1e-6 * max(1.0, abs(ll))
        theta, ll = cand, ll_c
    return theta, ll, max_iter, False


# --------------------------------------------------------------------------
# zero-inflated Poisson

@dataclass
class ZipFit:
    count_coef: float        # log(lambda)
    count_se: float
    zero_coef: float         # logit(pi)
    zero_se: float
    loglik: float
    loglik_i: np.ndarray = field(repr=False)
    n_iter: int = 0
    converged: bool = True
    boundary: bool = False
    df: int = 2

    @property
    def lam(self) -> float:
        return float(np.exp(self.count_coef))

    @property
    def pi(self) -> float:
        return float(special.expit(self.zero_coef))

    def to_dict(self) -> dict:
        return {"count_coef": self.count_coef, "count_se": self.count_se,
                "zero_coef": self.zero_coef, "zero_se": self.zero_se,
                "lambda": self.lam, "pi": self.pi, "loglik": self.loglik, "df": self.df,
                "boundary": self.boundary, "converged": self.converged}


def zip_loglik_i(y: np.ndarray, log_lam: float, logit_pi: float) -> np.ndarray:
    lam = np.exp(log_lam)
    log_pi = -np.logaddexp(0.0, -logit_pi)
    log_1mpi = -np.logaddexp(0.0, logit_pi)
    pos = y > 0
    out = np.empty(len(y))
    out[~pos] = np.logaddexp(log_pi, log_1mpi - lam)
    yp = y[pos]
    out[pos] = log_1mpi - lam + yp * log_lam - special.gammaln(yp + 1)
    return out


def poisson_loglik_i(y: np.ndarray, lam: float | None = None) -> np.ndarray:
    """Pointwise Poisson log-likelihood at ``lam`` (the MLE mean by default)."""
    y = np.asarray(y, dtype=float)
    lam = y.mean() if lam is None else lam
    return stats.poisson.logpmf(y, lam)


def _zip_parts(n0, n_pos, sum_y, b, g):
    lam = np.exp(b)
    pi = special.expit(g)
    E = np.exp(-lam)
    A = -np.expm1(-lam)
    D = pi + (1 - pi) * E
    fg = pi * (1 - pi) * A / D
    fb = -(1 - pi) * lam * E / D
    grad = np.array([n0 * fb + (sum_y - n_pos * lam), n0 * fg - n_pos * pi])
    fgg = A * pi * (1 - pi) * ((1 - 2 * pi) / D - pi * (1 - pi) * A / D ** 2)
    fgb = pi * (1 - pi) * lam * E * (1 / D + A * (1 - pi) / D ** 2)
    fbb = -(1 - pi) * lam * E * ((1 - lam) / D + (1 - pi) * lam * E / D ** 2)
    H = np.array([[n0 * fbb - n_pos * lam, n0 * fgb],
                  [n0 * fgb, n0 * fgg - n_pos * pi * (1 - pi)]])
    return grad, H


def fit_zip_intercept_only(y, max_iter: int = 100) -> ZipFit:
    """MLE of ``profit ~ 1`` under a zero-inflated Poisson.

    Parameters are ``log(lambda)`` and ``logit(pi)``. Without excess zeros
    the estimate sits on the ``pi = 0`` boundary and the Poisson fit is
    returned with ``boundary=True`` and an infinite-negative zero coefficient.
    """
    y = np.asarray(y)
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise ValueError("ZIP needs nonnegative integer counts")
    y = y.astype(float)
    n = len(y)
    n0 = int(np.sum(y == 0))
    n_pos = n - n0
    if n_pos == 0:
        raise DegenerateDataError("no positive counts")
    sum_y = float(y.sum())
    pos_mean = sum_y / n_pos

    # moment start: E[y | y > 0] = lam / (1 - exp(-lam)), then match P(0)
    lam = pos_mean
    for _ in range(200):
        lam_new = pos_mean * -np.expm1(-lam)
        if abs(lam_new - lam) < 1e-13 * lam:
            lam = lam_new
            break
        lam = lam_new
    pi0 = (n0 / n - np.exp(-lam)) / -np.expm1(-lam)

    if n0 == 0 or pi0 <= 1e-8:
        lam_p = sum_y / n
        lli = poisson_loglik_i(y, lam_p)
        se_b = 1.0 / np.sqrt(n * lam_p)
        return ZipFit(float(np.log(lam_p)), float(se_b), -np.inf, np.nan, float(lli.sum()),
                      lli, 0, True, True)

    def loglik(th):
        return float(zip_loglik_i(y, th[0], th[1]).sum())

    theta = np.array([np.log(lam), special.logit(min(pi0, 1 - 1e-8))])
    theta, ll, it, ok = _newton(loglik, lambda th: _zip_parts(n0, n_pos, sum_y, *th)[0],
                                lambda th: _zip_parts(n0, n_pos, sum_y, *th)[1], theta,
                                max_iter)
    _, H = _zip_parts(n0, n_pos, sum_y, *theta)
    cov = np.linalg.inv(-H)
    se = np.sqrt(np.diag(cov))
    lli = zip_loglik_i(y, theta[0], theta[1])
    return ZipFit(float(theta[0]), float(se[0]), float(theta[1]), float(se[1]),
                  float(lli.sum()), lli, it, ok, False)


# --------------------------------------------------------------------------
# Tobit, left-censored at zero

@dataclass
class TobitFit:
    coef: np.ndarray
    se: np.ndarray
    log_scale: float
    log_scale_se: float
    loglik: float
    loglik_i: np.ndarray = field(repr=False)
    grad_norm: float = 0.0
    n_iter: int = 0

    @property
    def scale(self) -> float:
        return float(np.exp(self.log_scale))

    def to_dict(self) -> dict:
        return {"coef": self.coef.tolist(), "se": self.se.tolist(),
                "log_scale": self.log_scale, "log_scale_se": self.log_scale_se,
                "loglik": self.loglik, "n_iter": self.n_iter}


def tobit_loglik_i(theta: np.ndarray, y: np.ndarray, X: np.ndarray) -> np.ndarray:
    beta, s = theta[:-1], theta[-1]
    sigma = np.exp(s)
    xb = X @ beta
    cens = y <= 0
    out = np.empty(len(y))
    out[cens] = special.log_ndtr(-xb[cens] / sigma)
    z = (y[~cens] - xb[~cens]) / sigma
    out[~cens] = -s - 0.5 * np.log(2 * np.pi) - 0.5 * z ** 2
    return out


def _tobit_grad_hess(theta, y, X):
    beta, s = theta[:-1], theta[-1]
    sigma = np.exp(s)
    xb = X @ beta
    cens = y <= 0
    k = len(beta)
    g = np.zeros(k + 1)
    H = np.zeros((k + 1, k + 1))

    Xu = X[~cens]
    z = (y[~cens] - xb[~cens]) / sigma
    g[:k] += Xu.T @ z / sigma
    g[k] += np.sum(z ** 2 - 1)
    H[:k, :k] -= Xu.T @ Xu / sigma ** 2
    H[:k, k] -= 2 * Xu.T @ z / sigma
    H[k, k] -= 2 * np.sum(z ** 2)

    Xc = X[cens]
    c = -xb[cens] / sigma
    lam = np.exp(stats.norm.logpdf(c) - special.log_ndtr(c))
    g[:k] -= Xc.T @ lam / sigma
    g[k] -= np.sum(lam * c)
    w = lam * (c + lam)
    H[:k, :k] -= (Xc * w[:, None]).T @ Xc / sigma ** 2
    q = lam * (1 - c * (c + lam))
    H[:k, k] += Xc.T @ q / sigma
    H[k, k] += np.sum(q * c)
    H[k, :k] = H[:k, k]
    return g, H


def fit_tobit(y, X=None, max_iter: int = 200) -> TobitFit:
    """Latent-normal regression ``y* = X b + e``, observed ``y = max(0, y*)``.

    ``X`` defaults to an intercept column. Parameters are ``b`` and
    ``log(sigma)``; Newton with step halving from the OLS solution.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.ones((len(y), 1)) if X is None else np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if np.all(y <= 0):
        raise DegenerateDataError("every observation is censored")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DesignError("design matrix is rank deficient")
    beta0, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta0
    theta = np.append(beta0, np.log(max(np.sqrt(np.mean(resid ** 2)), 1e-12)))

    def loglik(th):
        return float(tobit_loglik_i(th, y, X).sum())

    theta, ll, it, ok = _newton(loglik, lambda th: _tobit_grad_hess(th, y, X)[0],
                                lambda th: _tobit_grad_hess(th, y, X)[1], theta, max_iter)
    g, H = _tobit_grad_hess(theta, y, X)
    gnorm = float(np.linalg.norm(g))
    if not ok:
        raise NonConvergenceError(f"Tobit fit did not converge (|grad| = {gnorm:.3g})", gnorm)
    se = np.sqrt(np.diag(np.linalg.inv(-H)))
    lli = tobit_loglik_i(theta, y, X)
    return TobitFit(theta[:-1].copy(), se[:-1], float(theta[-1]), float(se[-1]),
                    float(lli.sum()), lli, gnorm, it)


def normal_loglik_i(y, X=None) -> np.ndarray:
    """Pointwise Gaussian log-likelihood of the OLS fit at the MLE variance."""
    y = np.asarray(y, dtype=float).ravel()
    X = np.ones((len(y), 1)) if X is None else np.asarray(X, dtype=float)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ beta
    s2 = np.mean(r ** 2)
    return -0.5 * (np.log(2 * np.pi * s2) + r ** 2 / s2)


# --------------------------------------------------------------------------
# Vuong

@dataclass(frozen=True)
class VuongResult:
    z: float
    p: float
    direction: str      # "model1", "model2", "indistinguishable" or "indeterminate"
    n: int

    def to_dict(self) -> dict:
        return {"z": None if np.isnan(self.z) else self.z,
                "p": None if np.isnan(self.p) else self.p,
                "direction": self.direction, "n": self.n}


def vuong_test(loglik_pointwise_1, loglik_pointwise_2, alpha: float = 0.05) -> VuongResult:
    """Non-nested comparison: ``z = sqrt(n) mean(m) / sd(m)``, ``m = l1 - l2``."""
    l1 = np.asarray(loglik_pointwise_1, dtype=float)
    l2 = np.asarray(loglik_pointwise_2, dtype=float)
    if l1.shape != l2.shape:
        raise ValueError("pointwise log-likelihood vectors differ in length")
    m = l1 - l2
    n = len(m)
    sd = np.std(m, ddof=1) if n > 1 else 0.0
    if not sd > 0:
        return VuongResult(np.nan, np.nan, "indeterminate", n)
    z = float(np.sqrt(n) * np.mean(m) / sd)
    p = float(2 * stats.norm.sf(abs(z)))
    if p >= alpha:
        direction = "indistinguishable"
    else:
        direction = "model1" if z > 0 else "model2"
    return VuongResult(z, p, direction, n)
