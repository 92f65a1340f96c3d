"""Ordinal dominance curve, SDF volatility bounds and the dominance test."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_float_array, check_positive, check_tau, check_taus
from .bootstrap import ResamplePlan, resample_indices
from .exceptions import (
    AlignmentError,
    GridMismatch,
    InputError,
    InsufficientBootstrap,
    InvalidExponent,
    MixedHorizon,
    TooFewObservations,
    ZeroVariance,
)
from .rnd import DistributionEstimate, QuantileCurve

log = logging.getLogger(__name__)

KINDS = ("local", "snow", "log_entropy", "liu")


@dataclass(frozen=True, eq=False)
class ODC:
    """phi(tau) = F(Q~(tau)): physical probability below the risk-neutral quantile."""

    taus: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        taus = check_taus(self.taus)
        phi = as_float_array(self.phi, "phi")
        if phi.shape != taus.shape:
            raise GridMismatch("one phi value per tau required")
        if np.any(phi < -1e-12) or np.any(phi > 1 + 1e-12) or np.any(np.diff(phi) < -1e-12):
            raise InputError("phi must be nondecreasing within [0, 1]")
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "phi", np.clip(phi, 0.0, 1.0))

    def at(self, tau: float) -> float:
        return float(np.interp(tau, self.taus, self.phi))


@dataclass(frozen=True, eq=False)
class BoundCurve:
    taus: np.ndarray
    values: np.ndarray
    kind: str
    rf: float
    param: float | None = None
    phi: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"kind must be one of {KINDS}")

    def at(self, tau: float) -> float:
        return float(np.interp(tau, self.taus, self.values))

    @property
    def argmax(self) -> float:
        return float(self.taus[np.nanargmax(self.values)])


# ----------------------------------------------------------------------------
# bounds


def odc(physical_cdf, rn_quantiles: QuantileCurve, taus=None) -> ODC:
    """Compose a physical CDF with risk-neutral quantiles.

    ``physical_cdf`` is a DistributionEstimate, a fitted KernelCDF or any
    callable returning probabilities.
    """
    if taus is not None and not np.array_equal(check_taus(taus), rn_quantiles.taus):
        raise GridMismatch("tau grid differs from the risk-neutral quantile grid")
    if isinstance(physical_cdf, DistributionEstimate):
        if physical_cdf.measure != "physical":
            log.warning("odc called with a %s distribution as the physical CDF", physical_cdf.measure)
        h = rn_quantiles.horizon_days
        if h is not None and physical_cdf.horizon_days is not None and h != physical_cdf.horizon_days:
            raise GridMismatch(f"horizons differ: {physical_cdf.horizon_days} vs {h}")
        phi = physical_cdf.cdf_at(rn_quantiles.values)
    elif hasattr(physical_cdf, "cdf"):
        phi = physical_cdf.cdf(rn_quantiles.values)
    else:
        phi = physical_cdf(rn_quantiles.values)
    return ODC(rn_quantiles.taus, np.maximum.accumulate(np.asarray(phi, dtype=float)))


def _trim(taus: np.ndarray, epsilon: float) -> np.ndarray:
    if not 0.0 <= epsilon < 0.5:
        raise InputError("epsilon must lie in [0, 0.5)")
    return (taus >= epsilon - 1e-12) & (taus <= 1.0 - epsilon + 1e-12)


def local_bound(curve: ODC, rf: float, epsilon: float = 0.01) -> BoundCurve:
    """|tau - phi| / (sqrt(phi (1 - phi)) R_f) on tau in [eps, 1 - eps].

    Where phi is 0 or 1 the bound is infinite unless tau equals phi.
    """
    rf = check_positive(rf, "rf")
    keep = _trim(curve.taus, epsilon)
    t, p = curve.taus[keep], curve.phi[keep]
    gap = np.abs(t - p)
    den = np.sqrt(p * (1.0 - p)) * rf
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(den > 0, gap / den, np.where(gap > 0, np.inf, 0.0))
    return BoundCurve(t, val, "local", rf, phi=p)


def hj_bound(returns_mean: float, returns_sd: float, rf: float) -> float:
    if not returns_sd > 0:
        raise ZeroVariance("return standard deviation must be positive")
    rf = check_positive(rf, "rf")
    return abs(returns_mean - rf) / (returns_sd * rf)


def alt_bounds(curve: ODC, rn_quantiles: QuantileCurve | None, rf: float, kind: str, param: float | None = None, epsilon: float = 0.01) -> BoundCurve:
    """Quantile-event versions of higher-moment SDF bounds.

    snow (p > 1):   E(M^p)^(1/p) >= (tau / R_f) phi^(-1/q),  1/p + 1/q = 1
    log_entropy:    -E(log M | R <= Q~) >= log R_f + log phi - log tau
    liu (s < 0):    E(M^s) >= (tau / R_f)^s phi^(1 - s)
    Points with phi = 0 are dropped.
    """
    if rn_quantiles is not None and not np.array_equal(rn_quantiles.taus, curve.taus):
        raise GridMismatch("ODC and quantile curve use different tau grids")
    rf = check_positive(rf, "rf")
    keep = _trim(curve.taus, epsilon) & (curve.phi > 0)
    t, p = curve.taus[keep], curve.phi[keep]
    if kind == "snow":
        if param is None or not param > 1:
            raise InvalidExponent("snow bound needs p > 1")
        q = param / (param - 1.0)
        val = (t / rf) * p ** (-1.0 / q)
    elif kind == "log_entropy":
        val = np.log(rf) + np.log(p) - np.log(t)
    elif kind == "liu":
        if param is None or not param < 0:
            raise InvalidExponent("liu bound needs s < 0")
        val = (t / rf) ** param * p ** (1.0 - param)
    else:
        raise InputError(f"unknown bound kind {kind!r}")
    return BoundCurve(t, val, kind, rf, param, phi=p)


# ----------------------------------------------------------------------------
# kernel CDF


def _int_epanechnikov(u):
    u = np.clip(u, -1.0, 1.0)
    return 0.5 + 0.75 * u - 0.25 * u**3


def _epanechnikov(u):
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def silverman_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    s = min(np.std(x, ddof=1), iqr / 1.349) if iqr > 0 else np.std(x, ddof=1)
    # Epanechnikov canonical rescaling of the normal-reference rule.
    return float(2.34 * s * x.size ** (-0.2)) if s > 0 else 0.0


def cv_bandwidth(x: np.ndarray, n_bandwidths: int = 40, span=(0.1, 10.0), n_grid: int = 512) -> float:
    """Leave-one-out integrated squared error of the smoothed CDF over a log grid."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    h0 = silverman_bandwidth(x)
    if h0 <= 0:
        return 0.0
    hs = h0 * np.geomspace(span[0], span[1], n_bandwidths)
    scores = np.empty(hs.size)
    for i, h in enumerate(hs):
        grid = np.linspace(x[0] - h, x[-1] + h, n_grid)
        K = _int_epanechnikov((grid[None, :] - x[:, None]) / h)
        total = K.sum(axis=0)
        loo = (total[None, :] - K) / (n - 1)
        ind = (x[:, None] <= grid[None, :]).astype(float)
        scores[i] = np.trapezoid(np.mean((ind - loo) ** 2, axis=0), grid)
    return float(hs[np.argmin(scores)])


class KernelCDF(BaseEstimator):
    """Smoothed empirical CDF with an integrated Epanechnikov kernel.

    ``bandwidth=None`` selects h by leave-one-out cross-validation.
    """

    def __init__(self, bandwidth: float | None = None, n_bandwidths: int = 40, min_obs: int = 30):
        self.bandwidth = bandwidth
        self.n_bandwidths = n_bandwidths
        self.min_obs = min_obs

    def fit(self, X, y=None):
        x = as_float_array(np.ravel(getattr(X, "values", X)), "returns")
        if x.size < self.min_obs:
            raise TooFewObservations(f"need at least {self.min_obs} observations, got {x.size}")
        self.sample_ = np.sort(x)
        self.n_obs_ = x.size
        if self.bandwidth is None:
            self.bandwidth_ = cv_bandwidth(self.sample_, self.n_bandwidths)
        else:
            self.bandwidth_ = float(self.bandwidth)
            if self.bandwidth_ < 0:
                raise InputError("bandwidth must be nonnegative")
        return self

    def cdf(self, x) -> np.ndarray:
        check_is_fitted(self, "sample_")
        return kernel_cdf_values(self.sample_, x, self.bandwidth_)

    def pdf(self, x) -> np.ndarray:
        check_is_fitted(self, "sample_")
        x = np.asarray(x, dtype=float)
        h = self.bandwidth_
        if h <= 0:
            return np.zeros_like(x)
        return _epanechnikov((x[..., None] - self.sample_) / h).mean(axis=-1) / h

    def to_distribution(self, grid=None, horizon_days=None) -> DistributionEstimate:
        check_is_fitted(self, "sample_")
        if grid is None:
            h = max(self.bandwidth_, 1e-12)
            grid = np.linspace(self.sample_[0] - h, self.sample_[-1] + h, 2001)
        grid = np.asarray(grid, dtype=float)
        return DistributionEstimate(grid, self.cdf(grid), self.pdf(grid), "physical", horizon_days=horizon_days)


def kernel_cdf_values(sample: np.ndarray, x, h: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    s = np.asarray(sample, dtype=float)
    if h <= 0:
        lo = np.searchsorted(np.sort(s), x, side="left")
        hi = np.searchsorted(np.sort(s), x, side="right")
        return 0.5 * (lo + hi) / s.size
    return _int_epanechnikov((x[..., None] - s) / h).mean(axis=-1)


def kernel_cdf(returns, bandwidth: float | None = None) -> DistributionEstimate:
    est = KernelCDF(bandwidth).fit(returns)
    return est.to_distribution(horizon_days=getattr(returns, "horizon_days", None))


# ----------------------------------------------------------------------------
# dominance test


@dataclass(frozen=True)
class DominanceResult:
    tau_star: float
    T_stat: float
    p_value: float
    local: float
    hj: float
    n_boot: int
    seed: int
    block_length: int
    bandwidth: float
    t_boot: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))

    def to_dict(self) -> dict:
        return {
            "tau_star": self.tau_star,
            "T_stat": self.T_stat,
            "p_value": self.p_value,
            "local_bound": self.local,
            "hj_bound": self.hj,
            "n_boot": self.n_boot,
            "seed": self.seed,
            "block_length": self.block_length,
            "bandwidth": self.bandwidth,
        }


def _align_dists(returns, rn_dists):
    dates = getattr(returns, "dates", None)
    r = np.asarray(getattr(returns, "values", returns), dtype=float)
    dists = list(rn_dists)
    if dates is not None and all(d.date is not None for d in dists):
        by_date = {d.date: d for d in dists}
        missing = [d for d in dates if d not in by_date]
        if missing:
            raise AlignmentError(f"{len(missing)} return dates lack a risk-neutral distribution, first {missing[0]}")
        dists = [by_date[d] for d in dates]
    if len(dists) != r.size:
        raise AlignmentError(f"{r.size} returns vs {len(dists)} distributions")
    return r, dists


def _statistic(r, rf, counts, cdf_mat, grid, tau_star, h):
    """T = local(tau*) - HJ for one (re)sample given per-date sampling counts."""
    w = counts / counts.sum()
    cdf = w @ cdf_mat
    q = DistributionEstimate(grid, cdf, np.zeros_like(grid)).quantile([tau_star])[0]
    sample = np.repeat(r, counts)
    phi = float(kernel_cdf_values(sample, q, h))
    rbar = float(w @ rf)
    local = abs(tau_star - phi) / (np.sqrt(phi * (1 - phi)) * rbar) if 0 < phi < 1 else np.inf
    sd = np.std(sample, ddof=1)
    hj = hj_bound(sample.mean(), sd, rbar)
    return local - hj, local, hj


def _boot_chunk(r, rf, cdf_mat, grid, tau_star, h, plan, ids):
    out = np.empty(len(ids))
    for k, rid in enumerate(ids):
        counts = np.bincount(resample_indices(plan, r.size, rid), minlength=r.size)
        try:
            out[k] = _statistic(r, rf, counts, cdf_mat, grid, tau_star, h)[0]
        except ZeroVariance:
            out[k] = np.nan
    return out


def dominance_test(
    returns,
    rn_dists,
    tau_star: float = 0.046,
    rf=None,
    n_boot: int = 1000,
    seed: int = 0,
    block_length: int = 12,
    epsilon: float = 0.01,
    bandwidth: float | None = None,
    n_jobs: int = 1,
) -> DominanceResult:
    """Stationary-bootstrap test of H0: local(tau*) - HJ <= 0.

    Each replicate resamples dates, re-averages the matching risk-neutral CDFs,
    recomputes the kernel CDF (bandwidth held at the full-sample value) and
    both bounds.  ``rf`` may be a scalar, a per-date array, or None to use the
    rates stored on the distributions.
    """
    check_tau(tau_star)
    if not epsilon <= tau_star <= 1 - epsilon:
        raise InputError(f"tau_star={tau_star} outside the trimmed range [{epsilon}, {1 - epsilon}]")
    if n_boot < 100:
        raise InsufficientBootstrap(f"n_boot={n_boot}; at least 100 replicates required")
    r, dists = _align_dists(returns, rn_dists)
    if rf is None:
        if any(d.rf is None for d in dists):
            raise InputError("risk-free rates missing from distributions; pass rf")
        rf_vec = np.array([d.rf for d in dists], dtype=float)
    else:
        rf_vec = np.broadcast_to(np.asarray(rf, dtype=float), r.shape).astype(float)
    if len({d.horizon_days for d in dists}) > 1:
        raise MixedHorizon("risk-neutral distributions mix horizons")
    grid = dists[0].grid
    if all(np.array_equal(d.grid, grid) for d in dists):
        cdf_mat = np.array([d.cdf for d in dists])
    else:
        grid = np.unique(np.concatenate([d.grid for d in dists]))
        cdf_mat = np.array([d.cdf_at(grid) for d in dists])
    h = KernelCDF(bandwidth).fit(r).bandwidth_
    ones = np.ones(r.size, dtype=int)
    T, local, hj = _statistic(r, rf_vec, ones, cdf_mat, grid, tau_star, h)

    plan = ResamplePlan("stationary", block_length, n_boot, seed)
    ids = np.arange(n_boot)
    nj = max(1, n_jobs if n_jobs > 0 else 8)
    chunks = [c for c in np.array_split(ids, min(nj, n_boot)) if c.size]
    if len(chunks) == 1:
        t_boot = _boot_chunk(r, rf_vec, cdf_mat, grid, tau_star, h, plan, chunks[0])
    else:
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_boot_chunk)(r, rf_vec, cdf_mat, grid, tau_star, h, plan, c) for c in chunks
        )
        t_boot = np.concatenate(parts)
    p = float(np.mean(t_boot[~np.isnan(t_boot)] <= 0))
    return DominanceResult(tau_star, float(T), p, float(local), float(hj), n_boot, seed, block_length, float(h), t_boot)


__all__ = [
    "ODC",
    "BoundCurve",
    "odc",
    "local_bound",
    "hj_bound",
    "alt_bounds",
    "KernelCDF",
    "kernel_cdf",
    "cv_bandwidth",
    "dominance_test",
    "DominanceResult",
]
