"""Linear quantile regression.

The main solver is a Mehrotra predictor-corrector interior point method on the
bounded dual LP (the Frisch-Newton approach of Koenker and Portnoy), followed
by a crossover to an optimal basic solution so the returned coefficients
interpolate exactly ``p`` observations.  ``solver="exhaustive"`` enumerates all
``p``-subsets and is meant as a reference for small problems.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import stats
from scipy.optimize import linprog
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from ._validation import as_float_array, check_tau, pinball
from .exceptions import (
    AlignmentError,
    DegenerateDesign,
    InputError,
    NonConvergence,
    SingularCovariance,
    WindowTooLong,
)

log = logging.getLogger(__name__)

_KKT_TOL = 1e-9


@dataclass(frozen=True)
class QRDesign:
    """Responses, regressors and quantile level for one fit.

    ``regressors`` excludes the intercept column; it is prepended when
    ``include_intercept`` is true.  Optional positive ``weights`` scale each
    observation's check loss.
    """

    responses: np.ndarray
    regressors: np.ndarray
    tau: float
    include_intercept: bool = True
    weights: np.ndarray | None = None

    def __post_init__(self):
        y = as_float_array(self.responses, "responses")
        Z = np.asarray(self.regressors, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.ndim != 2 or Z.shape[0] != y.size:
            raise InputError(f"regressors shape {Z.shape} does not match {y.size} responses")
        if not np.all(np.isfinite(Z)):
            raise InputError("regressors contain non-finite values")
        check_tau(self.tau)
        object.__setattr__(self, "responses", y)
        object.__setattr__(self, "regressors", Z)
        if self.weights is not None:
            w = as_float_array(self.weights, "weights")
            if w.size != y.size or np.any(w <= 0):
                raise InputError("weights must be positive, one per observation")
            object.__setattr__(self, "weights", w)
        if y.size < self.n_params + 1:
            raise InputError(f"need at least {self.n_params + 1} rows, got {y.size}")

    @property
    def n_params(self) -> int:
        return self.regressors.shape[1] + int(self.include_intercept)

    @property
    def X(self) -> np.ndarray:
        if self.include_intercept:
            return np.column_stack([np.ones(self.responses.size), self.regressors])
        return self.regressors

    def subset(self, idx: np.ndarray, weights: np.ndarray | None = None) -> "QRDesign":
        return QRDesign(self.responses[idx], self.regressors[idx], self.tau, self.include_intercept, weights)


@dataclass
class QRFit:
    beta: np.ndarray
    loss: float
    r1: float
    n_obs: int
    tau: float
    basis: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    cov_boot: np.ndarray | None = None
    wald_p: float | None = None
    iterations: int = 0

    @property
    def se(self) -> np.ndarray | None:
        if self.cov_boot is None:
            return None
        return np.sqrt(np.clip(np.diag(self.cov_boot), 0.0, None))

    def predict(self, regressors, include_intercept: bool = True) -> np.ndarray:
        Z = np.asarray(regressors, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if include_intercept:
            Z = np.column_stack([np.ones(Z.shape[0]), Z])
        return Z @ self.beta

    def to_dict(self) -> dict:
        se = self.se
        return {
            "tau": self.tau,
            "beta": self.beta.tolist(),
            "se": None if se is None else se.tolist(),
            "wald_p": self.wald_p,
            "r1": self.r1,
            "loss": self.loss,
            "n_obs": self.n_obs,
        }


# ----------------------------------------------------------------------------
# solvers


def _step_length(v: np.ndarray, dv: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dv < 0, -v / dv, np.inf)
    return float(ratio.min())


def _interior_point(X: np.ndarray, y: np.ndarray, tau: float, max_iter: int = 100, tol: float = 1e-12):
    """Solve the dual  max y'a  s.t.  X'a = (1-tau) X'1,  0 <= a <= 1.

    Returns (beta, a, iterations); beta are the multipliers of the equality
    constraints, i.e. the primal regression coefficients.
    """
    n, p = X.shape
    c = -y
    x = np.full(n, 1.0 - tau)  # dual weights a
    s = 1.0 - x
    yd, *_ = np.linalg.lstsq(X, c, rcond=None)
    r = c - X @ yd
    shift = max(1e-3 * np.max(np.abs(r)), 1e-10)
    z = np.maximum(r, 0.0) + shift
    w = z - r
    scale = 1.0 + np.abs(y).sum()
    for it in range(1, max_iter + 1):
        gap = float(z @ x + w @ s)
        if gap < tol * scale:
            return -yd, x, it
        q = 1.0 / (z / x + w / s)

        def solve(v):
            # dx = q (X dy + v),  X' dx = 0
            XQ = X * q[:, None]
            M = XQ.T @ X
            dy = -np.linalg.solve(M, XQ.T @ v)
            dx = q * (X @ dy + v)
            return dy, dx

        # predictor
        v = w - z
        dy, dx = solve(v)
        ds = -dx
        dz = -z - z * dx / x
        dw = -w - w * ds / s
        ap = min(1.0, 0.99995 * min(_step_length(x, dx), _step_length(s, ds)))
        ad = min(1.0, 0.99995 * min(_step_length(z, dz), _step_length(w, dw)))
        mu = gap / (2 * n)
        if min(ap, ad) < 1.0:
            g = float((z + ad * dz) @ (x + ap * dx) + (w + ad * dw) @ (s + ap * ds))
            sigma_mu = mu * (g / gap) ** 3
            rxz = sigma_mu - x * z - dx * dz
            rsw = sigma_mu - s * w - ds * dw
            v = rxz / x - rsw / s
            dy, dx = solve(v)
            ds = -dx
            dz = (rxz - z * dx) / x
            dw = (rsw - w * ds) / s
            ap = min(1.0, 0.99995 * min(_step_length(x, dx), _step_length(s, ds)))
            ad = min(1.0, 0.99995 * min(_step_length(z, dz), _step_length(w, dw)))
        x = x + ap * dx
        s = s + ap * ds
        yd = yd + ad * dy
        z = z + ad * dz
        w = w + ad * dw
    raise NonConvergence(f"interior point did not converge in {max_iter} iterations (gap {gap:.3g})")


def _basic_solution(X, y, h):
    Xh = X[h]
    if np.linalg.cond(Xh) > 1e12:
        return None
    return np.linalg.solve(Xh, y[h])


def _kkt_ok(X, y, tau, h, beta, w=None) -> bool:
    """Directional-derivative optimality check at the basic solution b(h)."""
    n = y.size
    mask = np.ones(n, dtype=bool)
    mask[h] = False
    r = y - X @ beta
    psi = tau - (r[mask] < 0)
    if w is not None:
        psi = psi * w[mask]
        wh = w[h]
    else:
        wh = np.ones(len(h))
    xi = np.linalg.solve(X[h].T, X[mask].T @ psi)
    tol = _KKT_TOL * max(1.0, np.abs(xi).max())
    return bool(np.all(xi >= -tau * wh - tol) and np.all(xi <= (1 - tau) * wh + tol))


def _objective(X, y, tau, beta, w=None) -> float:
    loss = pinball(y - X @ beta, tau)
    return float(loss.sum() if w is None else (w * loss).sum())


def _crossover(X, y, tau, beta0, a=None, w=None):
    """Move an interior solution to an optimal vertex; returns (beta, basis) or None."""
    n, p = X.shape
    r = y - X @ beta0
    orders = [np.argsort(np.abs(r), kind="stable")]
    if a is not None:
        orders.append(np.argsort(-np.minimum(a, 1 - a), kind="stable"))
    for order in orders:
        h = []
        for i in order:
            trial = h + [int(i)]
            if np.linalg.matrix_rank(X[trial], tol=1e-10 * max(1.0, np.abs(X[trial]).max())) == len(trial):
                h = trial
            if len(h) == p:
                break
        if len(h) < p:
            continue
        h = np.array(sorted(h))
        beta = _basic_solution(X, y, h)
        if beta is not None and _kkt_ok(X, y, tau, h, beta, w):
            return beta, h
    return None


def _simplex_fallback(X, y, tau, w=None):
    n, p = X.shape
    wt = np.ones(n) if w is None else w
    cost = np.concatenate([np.zeros(p), tau * wt, (1 - tau) * wt])
    A = np.hstack([X, np.eye(n), -np.eye(n)])
    bounds = [(None, None)] * p + [(0, None)] * (2 * n)
    res = linprog(cost, A_eq=A, b_eq=y, bounds=bounds, method="highs-ds")
    if res.status != 0:
        raise NonConvergence(f"simplex fallback failed: {res.message}")
    return res.x[:p]


def _tie_break(X, y, tau, beta, h, beta_center, w=None):
    """Among optimal vertices near the centre of the optimal face pick the smallest norm."""
    n, p = X.shape
    best = _objective(X, y, tau, beta, w)
    r = np.abs(y - X @ beta_center)
    cand = np.argsort(r, kind="stable")[: min(n, p + 4)]
    out_beta, out_h = beta, h
    for sub in itertools.combinations(sorted(cand.tolist()), p):
        b = _basic_solution(X, y, list(sub))
        if b is None:
            continue
        if _objective(X, y, tau, b, w) <= best * (1 + 1e-12) + 1e-14:
            if np.linalg.norm(b) < np.linalg.norm(out_beta) - 1e-14:
                out_beta, out_h = b, np.array(sub)
    return out_beta, out_h


def _solve_fn(X, y, tau, w=None):
    # Repeated rows (bootstrap resamples) become one weighted row; ties at zero
    # residual would otherwise defeat the vertex crossover.
    uniq, first, inv = np.unique(np.column_stack([X, y]), axis=0, return_index=True, return_inverse=True)
    if uniq.shape[0] < y.size:
        wc = np.bincount(inv.ravel(), weights=np.ones(y.size) if w is None else w)
        beta, h, iters = _solve_fn(X[first], y[first], tau, wc)
        return beta, (first[h] if h.size else h), iters
    Xw, yw = (X, y) if w is None else (X * w[:, None], y * w)
    beta_c, a, iters = _interior_point(Xw, yw, tau)
    got = _crossover(X, y, tau, beta_c, a, w)
    if got is None:
        log.debug("crossover failed, falling back to dual simplex")
        beta_s = _simplex_fallback(X, y, tau, w)
        got = _crossover(X, y, tau, beta_s, None, w)
        if got is None:
            return beta_s, np.empty(0, dtype=int), iters
    beta, h = got
    beta, h = _tie_break(X, y, tau, beta, h, beta_c, w)
    return beta, h, iters


def _solve_exhaustive(X, y, tau, w=None):
    n, p = X.shape
    subsets = np.array(list(itertools.combinations(range(n), p)))
    Xs = X[subsets]  # (m, p, p)
    ok = np.abs(np.linalg.det(Xs)) > 1e-12 * np.maximum(1.0, np.abs(Xs).max(axis=(1, 2))) ** p
    if not np.any(ok):
        raise DegenerateDesign("no nonsingular p-subset")
    subsets, Xs = subsets[ok], Xs[ok]
    betas = np.linalg.solve(Xs, y[subsets][..., None])[..., 0]
    res = y[None, :] - betas @ X.T
    loss = res * (tau - (res < 0))
    if w is not None:
        loss = loss * w[None, :]
    obj = loss.sum(axis=1)
    best = obj.min()
    tied = np.flatnonzero(obj <= best + 1e-12 * max(1.0, abs(best)))
    k = tied[np.argmin(np.linalg.norm(betas[tied], axis=1))]
    return betas[k], subsets[k], 0


def r1_score(y: np.ndarray, loss: float, tau: float, w: np.ndarray | None = None) -> float:
    """1 - loss / loss of the unconditional tau-quantile."""
    q0 = np.quantile(y, tau, method="inverted_cdf")
    base = _objective(np.ones((y.size, 1)), y, tau, np.array([q0]), w)
    if loss <= 0.0:
        return 1.0
    if base <= 0.0:
        return float("-inf")
    return 1.0 - loss / base


def qr_fit(design: QRDesign, solver: str = "fn") -> QRFit:
    """Minimise the summed check loss.

    Parameters
    ----------
    design : QRDesign
    solver : {"fn", "exhaustive"}
        ``"exhaustive"`` is only allowed for ``n <= 30``.
    """
    X, y, tau, w = design.X, design.responses, design.tau, design.weights
    n, p = X.shape
    if np.linalg.matrix_rank(X) < p:
        raise DegenerateDesign(f"regressor matrix has rank {np.linalg.matrix_rank(X)} < {p}")
    if solver == "fn":
        beta, h, iters = _solve_fn(X, y, tau, w)
    elif solver == "exhaustive":
        if n > 30:
            raise InputError("exhaustive solver is limited to n <= 30")
        beta, h, iters = _solve_exhaustive(X, y, tau, w)
    else:
        raise InputError(f"unknown solver {solver!r}")
    loss = _objective(X, y, tau, beta, w)
    return QRFit(beta=beta, loss=loss, r1=r1_score(y, loss, tau, w), n_obs=n, tau=tau, basis=np.asarray(h), iterations=iters)


class QuantileRegression(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`qr_fit`.

    ``score`` returns R^1, the check-loss analogue of R^2.
    """

    def __init__(self, tau: float = 0.5, fit_intercept: bool = True, solver: str = "fn"):
        self.tau = tau
        self.fit_intercept = fit_intercept
        self.solver = solver

    def fit(self, X, y, sample_weight=None):
        X, y = validate_data(self, X, y, y_numeric=True)
        design = QRDesign(y, X, self.tau, self.fit_intercept, sample_weight)
        self.fit_ = qr_fit(design, solver=self.solver)
        if self.fit_intercept:
            self.intercept_, self.coef_ = float(self.fit_.beta[0]), self.fit_.beta[1:]
        else:
            self.intercept_, self.coef_ = 0.0, self.fit_.beta
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = validate_data(self, X, reset=False)
        return self.intercept_ + X @ self.coef_

    def score(self, X, y, sample_weight=None):
        check_is_fitted(self, "fit_")
        y = np.asarray(y, dtype=float)
        loss = _objective(np.ones((y.size, 1)), y - self.predict(X), self.tau, np.zeros(1), sample_weight)
        return r1_score(y, loss, self.tau, sample_weight)


# ----------------------------------------------------------------------------
# statistics


def _aligned(returns, values) -> tuple[np.ndarray, np.ndarray]:
    """Pair realised returns with per-date values.

    ``returns`` may be a ReturnSeries (anything with ``dates``/``values``) or
    an array; ``values`` may be a date-keyed mapping or an aligned array.
    """
    dates = getattr(returns, "dates", None)
    r = np.asarray(getattr(returns, "values", returns), dtype=float)
    if isinstance(values, Mapping):
        if dates is None:
            raise AlignmentError("date-keyed quantiles need a dated return series")
        keep = [i for i, d in enumerate(dates) if d in values]
        if not keep:
            raise AlignmentError("returns and quantiles share no dates")
        return r[keep], np.array([values[dates[i]] for i in keep], dtype=float)
    v = np.asarray(values, dtype=float)
    if v.shape != r.shape:
        raise AlignmentError(f"{r.size} returns vs {v.size} quantile values")
    if r.size == 0:
        raise AlignmentError("empty overlap")
    return r, v


def hit_statistic(returns, rn_quantiles, tau: float, percent: bool = True) -> float:
    """Mean of 1{R < Q} - tau; in percent by default."""
    tau = check_tau(tau)
    r, q = _aligned(returns, rn_quantiles)
    hit = float(np.mean((r < q) - tau))
    return 100.0 * hit if percent else hit


def rolling_quantile(values, window: int, tau: float) -> np.ndarray:
    """tau-quantile (generalised inverse of the ECDF) of values[t-window+1 .. t]; NaN before."""
    x = np.asarray(values, dtype=float)
    out = np.full(x.size, np.nan)
    if window > x.size:
        return out
    windows = np.lib.stride_tricks.sliding_window_view(x, window)
    out[window - 1 :] = np.quantile(windows, tau, axis=1, method="inverted_cdf")
    return out


def r1_oos(returns, forecast, window: int, tau: float) -> float:
    """Out-of-sample R^1 against a rolling historical quantile.

    Sums run over t >= window (0-based), where the benchmark at t is the
    quantile of the ``window`` most recent returns including R_t.
    """
    tau = check_tau(tau)
    if window < 20:
        raise InputError("window must be at least 20")
    r, f = _aligned(returns, forecast)
    if window >= r.size:
        raise WindowTooLong(f"window {window} >= sample size {r.size}")
    bench = rolling_quantile(r, window, tau)
    sl = slice(window, None)
    ok = np.isfinite(f[sl])
    num = pinball(r[sl][ok] - f[sl][ok], tau).sum()
    den = pinball(r[sl][ok] - bench[sl][ok], tau).sum()
    if den <= 0:
        return float("nan")
    return float(1.0 - num / den)


def wald_test(fit: QRFit, restriction: tuple | None = None) -> float:
    """p-value of H0: A beta = b using the bootstrap covariance."""
    if fit.cov_boot is None:
        raise InputError("fit carries no bootstrap covariance")
    p = fit.beta.size
    if restriction is None:
        A = np.eye(2, p)
        b = np.array([0.0, 1.0])
    else:
        A, b = restriction
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape[1] != p or b.size != A.shape[0]:
        raise InputError("restriction dimensions do not match beta")
    k = np.linalg.matrix_rank(A)
    if k < A.shape[0]:
        raise InputError("restriction matrix must have full row rank")
    d = A @ fit.beta - b
    V = A @ fit.cov_boot @ A.T
    ev = np.linalg.eigvalsh(V)
    if ev.min() <= 1e-14 * max(1.0, ev.max()):
        if np.allclose(d, 0.0, atol=1e-12):
            return 1.0
        raise SingularCovariance("restricted covariance is singular")
    stat = float(d @ np.linalg.solve(V, d))
    return float(stats.chi2.sf(stat, k))


def expanding_forecast(
    responses,
    rn_quantiles,
    initial_window: int = 500,
    tau: float = 0.5,
    refit_every: int = 1,
    extra_regressors=None,
) -> np.ndarray:
    """One-step forecasts beta_t' x_t with beta_t fitted on observations [0, t).

    Entries before ``initial_window`` are NaN.
    """
    y = as_float_array(responses, "responses")
    Z = np.asarray(rn_quantiles, dtype=float).reshape(y.size, -1)
    if extra_regressors is not None:
        Z = np.column_stack([Z, np.asarray(extra_regressors, dtype=float).reshape(y.size, -1)])
    if initial_window < 100:
        raise InputError("initial_window must be at least 100")
    if initial_window >= y.size:
        raise WindowTooLong(f"initial window {initial_window} >= sample size {y.size}")
    out = np.full(y.size, np.nan)
    beta = None
    for t in range(initial_window, y.size):
        if beta is None or (t - initial_window) % refit_every == 0:
            beta = qr_fit(QRDesign(y[:t], Z[:t], tau)).beta
        out[t] = beta[0] + Z[t] @ beta[1:]
    return out


def crossing_rate(curves: np.ndarray) -> float:
    """Share of rows whose values decrease somewhere along the tau axis."""
    c = np.atleast_2d(np.asarray(curves, dtype=float))
    if c.shape[1] < 2:
        return 0.0
    return float(np.mean(np.any(np.diff(c, axis=1) < 0, axis=1)))


def fit_with_bootstrap(design: QRDesign, plan, restriction=None, n_jobs: int = 1) -> QRFit:
    """Point fit plus bootstrap covariance and Wald p-value."""
    from .bootstrap import qr_boot_cov

    fit = qr_fit(design)
    cov = qr_boot_cov(design, plan, n_jobs=n_jobs)
    fit = replace(fit, cov_boot=cov)
    if fit.beta.size >= 2:
        try:
            fit.wald_p = wald_test(fit, restriction)
        except SingularCovariance:
            fit.wald_p = float("nan")
    return fit


__all__: Sequence[str] = [
    "QRDesign",
    "QRFit",
    "QuantileRegression",
    "qr_fit",
    "hit_statistic",
    "rolling_quantile",
    "r1_oos",
    "r1_score",
    "wald_test",
    "expanding_forecast",
    "crossing_rate",
    "fit_with_bootstrap",
]
