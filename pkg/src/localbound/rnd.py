"""Risk-neutral distributions from option chains.

Pipeline per chain: Black implied vols from out-of-the-money midprices, a
monotone cubic (PCHIP) smile in log forward moneyness with flat tails, puts
repriced on a dense strike grid, then the Breeden-Litzenberger identity
F(K/S) = R_f dP/dK by central differences.  The CDF is clipped and made
monotone with pool-adjacent-violators.
"""

from __future__ import annotations

import datetime as _dt
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import isotonic_regression

from ._black import black_price, implied_vol
from ._validation import DEFAULT_TAUS, as_float_array, check_taus
from .exceptions import (
    BracketingError,
    InputError,
    MixedHorizon,
    NonconvergentImpliedVol,
    TooFewStrikes,
)

log = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.0
MEASURES = ("physical", "risk_neutral")
SEMANTICS = ("rn_quantile", "physical_quantile", "bound", "odc", "risk_adjustment")


@dataclass(frozen=True)
class GridSpec:
    """Moneyness grid K/S used for repricing and for the stored CDF."""

    lo: float = 0.3
    hi: float = 2.0
    n: int = 2001

    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    @classmethod
    def from_grid(cls, grid: np.ndarray) -> "GridSpec":
        return cls(float(grid[0]), float(grid[-1]), int(grid.size))


@dataclass(frozen=True, eq=False)
class Smile:
    """Implied-vol nodes in log forward moneyness k = log(K/F) for one maturity."""

    underlying: float
    forward: float
    rf: float
    maturity_days: float
    log_moneyness: np.ndarray
    vols: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.log_moneyness, dtype=float)
        v = np.asarray(self.vols, dtype=float)
        if k.size < 2 or k.shape != v.shape or np.any(np.diff(k) <= 0):
            raise InputError("smile needs >= 2 strictly increasing nodes")
        object.__setattr__(self, "log_moneyness", k)
        object.__setattr__(self, "vols", v)
        object.__setattr__(self, "_interp", PchipInterpolator(k, v, extrapolate=False))

    @property
    def t(self) -> float:
        return self.maturity_days / DAYS_PER_YEAR

    def vol(self, k) -> np.ndarray:
        k = np.clip(np.asarray(k, dtype=float), self.log_moneyness[0], self.log_moneyness[-1])
        return self._interp(k)

    def to_dict(self) -> dict:
        return {
            "underlying": self.underlying,
            "forward": self.forward,
            "rf": self.rf,
            "maturity_days": self.maturity_days,
            "log_moneyness": self.log_moneyness.tolist(),
            "vols": self.vols.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Smile":
        return cls(d["underlying"], d["forward"], d["rf"], d["maturity_days"], np.array(d["log_moneyness"]), np.array(d["vols"]))


@dataclass(frozen=True, eq=False)
class QuantileCurve:
    taus: np.ndarray
    values: np.ndarray
    semantics: str = "rn_quantile"
    truncated: np.ndarray | None = None
    date: _dt.date | None = None
    horizon_days: float | None = None

    def __post_init__(self):
        taus = check_taus(self.taus)
        values = np.asarray(self.values, dtype=float)
        if values.shape != taus.shape:
            raise InputError("one value per tau required")
        if self.semantics not in SEMANTICS:
            raise InputError(f"unknown semantics {self.semantics!r}")
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "values", values)

    @property
    def crossings(self) -> int:
        """Number of decreases along tau (only meaningful for quantile semantics)."""
        return int(np.sum(np.diff(self.values) < 0))

    def at(self, tau: float) -> float:
        i = np.flatnonzero(np.isclose(self.taus, tau, rtol=0, atol=1e-12))
        if i.size:
            return float(self.values[i[0]])
        return float(np.interp(tau, self.taus, self.values))


@dataclass(frozen=True, eq=False)
class DistributionEstimate:
    """CDF and density tabulated on a gross-return grid.

    Between grid points the CDF is linear; ``quantile`` is its generalised
    inverse.  ``flags`` records failed soft invariants (tail coverage, density
    mass) instead of raising.
    """

    grid: np.ndarray
    cdf: np.ndarray
    pdf: np.ndarray
    measure: str = "risk_neutral"
    date: _dt.date | None = None
    horizon_days: float | None = None
    rf: float | None = None
    smile: Smile | None = None
    flags: tuple = field(default=())

    def __post_init__(self):
        grid = as_float_array(self.grid, "grid")
        cdf = as_float_array(self.cdf, "cdf")
        pdf = as_float_array(self.pdf, "pdf")
        if not (grid.shape == cdf.shape == pdf.shape) or grid.size < 2:
            raise InputError("grid, cdf and pdf must have equal length >= 2")
        if np.any(np.diff(grid) <= 0):
            raise InputError("grid must be strictly increasing")
        if np.any(cdf < -1e-12) or np.any(cdf > 1 + 1e-12) or np.any(np.diff(cdf) < -1e-12):
            raise InputError("cdf must be nondecreasing within [0, 1]")
        if np.any(pdf < 0):
            raise InputError("pdf must be nonnegative")
        if self.measure not in MEASURES:
            raise InputError(f"measure must be one of {MEASURES}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "cdf", np.clip(np.maximum.accumulate(cdf), 0.0, 1.0))
        object.__setattr__(self, "pdf", pdf)
        if not self.flags:
            object.__setattr__(self, "flags", tuple(self.check()))

    # invariants ---------------------------------------------------------
    def check(self) -> list[str]:
        issues = []
        if self.cdf[0] > 0.005:
            issues.append(f"left tail uncovered: cdf(grid[0])={self.cdf[0]:.4g}")
        if self.cdf[-1] < 0.995:
            issues.append(f"right tail uncovered: cdf(grid[-1])={self.cdf[-1]:.4g}")
        mass = float(np.trapezoid(self.pdf, self.grid))
        if not 0.99 <= mass <= 1.01:
            issues.append(f"pdf mass {mass:.4f} outside [0.99, 1.01]")
        return issues

    # evaluation ---------------------------------------------------------
    def cdf_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.grid, self.cdf)
        out = np.where(x < self.grid[0], 0.0, out)
        return np.where(x >= self.grid[-1], 1.0, out)

    def pdf_at(self, x) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.grid, self.pdf, left=0.0, right=0.0)

    def quantile(self, taus, return_flags: bool = False):
        """inf{x : tau <= F(x)} for the piecewise-linear CDF."""
        t = np.atleast_1d(np.asarray(taus, dtype=float))
        idx = np.searchsorted(self.cdf, t, side="left")
        below = idx == 0
        above = idx >= self.grid.size
        i = np.clip(idx, 1, self.grid.size - 1)
        c0, c1 = self.cdf[i - 1], self.cdf[i]
        x0, x1 = self.grid[i - 1], self.grid[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(c1 > c0, (t - c0) / (c1 - c0), 1.0)
        q = x0 + np.clip(frac, 0.0, 1.0) * (x1 - x0)
        q = np.where(below, self.grid[0], q)
        q = np.where(above, self.grid[-1], q)
        if return_flags:
            return q, below | above
        return q

    def quantile_curve(self, taus=None) -> QuantileCurve:
        taus = DEFAULT_TAUS if taus is None else check_taus(taus)
        q, trunc = self.quantile(taus, return_flags=True)
        sem = "rn_quantile" if self.measure == "risk_neutral" else "physical_quantile"
        return QuantileCurve(taus, q, sem, trunc, self.date, self.horizon_days)

    def with_meta(self, **kw) -> "DistributionEstimate":
        d = dict(
            grid=self.grid, cdf=self.cdf, pdf=self.pdf, measure=self.measure, date=self.date,
            horizon_days=self.horizon_days, rf=self.rf, smile=self.smile, flags=self.flags,
        )
        d.update(kw)
        return DistributionEstimate(**d)

    # construction / serialisation ----------------------------------------
    @classmethod
    def from_functions(
        cls,
        grid: np.ndarray,
        cdf: Callable[[np.ndarray], np.ndarray],
        pdf: Callable[[np.ndarray], np.ndarray],
        **meta,
    ) -> "DistributionEstimate":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.clip(cdf(grid), 0, 1), np.maximum(pdf(grid), 0.0), **meta)

    def to_dict(self) -> dict:
        return {
            "measure": self.measure,
            "date": None if self.date is None else self.date.isoformat(),
            "horizon_days": self.horizon_days,
            "rf": self.rf,
            "grid": self.grid.tolist(),
            "cdf": self.cdf.tolist(),
            "pdf": self.pdf.tolist(),
            "smile": None if self.smile is None else self.smile.to_dict(),
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DistributionEstimate":
        date = d.get("date")
        return cls(
            np.array(d["grid"]), np.array(d["cdf"]), np.array(d["pdf"]),
            measure=d.get("measure", "risk_neutral"),
            date=None if date is None else _dt.date.fromisoformat(date),
            horizon_days=d.get("horizon_days"),
            rf=d.get("rf"),
            smile=None if d.get("smile") is None else Smile.from_dict(d["smile"]),
            flags=tuple(d.get("flags", ())),
        )


# ----------------------------------------------------------------------------
# fitting


def distribution_from_smile(smile: Smile, grid: GridSpec = GridSpec(), date=None) -> DistributionEstimate:
    """Reprice puts on the moneyness grid and differentiate."""
    x = grid.points()
    S = smile.underlying
    K = x * S
    vol = smile.vol(np.log(K / smile.forward))
    put = black_price(smile.forward, K, vol, smile.t, 1.0 / smile.rf, False)
    hK = K[1] - K[0]
    cdf = smile.rf * np.gradient(put, hK)
    d2 = np.empty_like(put)
    d2[1:-1] = (put[2:] - 2 * put[1:-1] + put[:-2]) / hK**2
    d2[0], d2[-1] = d2[1], d2[-2]
    pdf = np.maximum(smile.rf * S * d2, 0.0)
    cdf = isotonic_regression(np.clip(cdf, 0.0, 1.0)).x
    dist = DistributionEstimate(
        x, np.clip(cdf, 0.0, 1.0), pdf, "risk_neutral", date, smile.maturity_days, smile.rf, smile
    )
    if dist.flags:
        log.warning("distribution for %s (%s days): %s", date, smile.maturity_days, "; ".join(dist.flags))
    return dist


def fit_rn_distribution(chain, grid: GridSpec = GridSpec(), max_drop_share: float = 0.2) -> DistributionEstimate:
    """Risk-neutral CDF/density for one cleaned :class:`~localbound.marketdata.OptionChain`."""
    S, F, Rf = chain.underlying, chain.forward, chain.risk_free_gross
    strikes = np.array([q.strike for q in chain.quotes], dtype=float)
    if np.unique(strikes).size < 8:
        raise TooFewStrikes(f"{chain.observation_date}: {np.unique(strikes).size} distinct strikes, need 8")
    m = strikes / S
    if m.min() > 0.7 or m.max() < 1.1:
        raise TooFewStrikes(
            f"{chain.observation_date}: strikes span moneyness [{m.min():.3f}, {m.max():.3f}], need [0.7, 1.1]"
        )
    mids = np.array([q.mid for q in chain.quotes], dtype=float)
    calls = np.array([q.flag == "C" for q in chain.quotes])
    t = chain.maturity_days / DAYS_PER_YEAR
    iv = implied_vol(mids, F, strikes, t, 1.0 / Rf, calls)
    ok = np.isfinite(iv)
    if ok.mean() < 1.0 - max_drop_share:
        raise NonconvergentImpliedVol(
            f"{chain.observation_date}: implied vol failed for {np.sum(~ok)} of {ok.size} quotes"
        )
    if np.sum(ok) < 8:
        raise TooFewStrikes(f"{chain.observation_date}: only {np.sum(ok)} quotes with implied vols")
    if not ok.all():
        log.info("%s: dropped %d quotes without implied vol", chain.observation_date, np.sum(~ok))
    smile = Smile(S, F, Rf, chain.maturity_days, np.log(strikes[ok] / F), iv[ok])
    return distribution_from_smile(smile, grid, chain.observation_date)


def interpolate_maturity(chain_a: DistributionEstimate, chain_b: DistributionEstimate, target_days: float) -> DistributionEstimate:
    """Linear interpolation of total implied variance at fixed log forward moneyness."""
    if target_days == chain_a.horizon_days:
        return chain_a
    if target_days == chain_b.horizon_days:
        return chain_b
    if chain_a.date != chain_b.date:
        raise InputError(f"dates differ: {chain_a.date} vs {chain_b.date}")
    if chain_a.horizon_days is None or chain_b.horizon_days is None:
        raise InputError("both inputs need a horizon")
    if not chain_a.horizon_days < target_days < chain_b.horizon_days:
        raise BracketingError(f"{target_days} not inside ({chain_a.horizon_days}, {chain_b.horizon_days})")
    a, b = chain_a.smile, chain_b.smile
    if a is None or b is None:
        raise InputError("maturity interpolation needs distributions fitted from option smiles")
    if not np.isclose(a.underlying, b.underlying):
        raise InputError("underlying differs between the two maturities")
    ta, tb, t = a.t, b.t, target_days / DAYS_PER_YEAR
    wb = (t - ta) / (tb - ta)
    k = np.union1d(a.log_moneyness, b.log_moneyness)
    total_var = (1 - wb) * a.vol(k) ** 2 * ta + wb * b.vol(k) ** 2 * tb
    log_rf = (1 - wb) * np.log(a.rf) + wb * np.log(b.rf)
    log_carry = (1 - wb) * np.log(a.forward / a.underlying) + wb * np.log(b.forward / b.underlying)
    smile = Smile(a.underlying, a.underlying * np.exp(log_carry), float(np.exp(log_rf)), target_days, k, np.sqrt(total_var / t))
    return distribution_from_smile(smile, GridSpec.from_grid(chain_a.grid), chain_a.date)


def rn_quantile_curve(dist: DistributionEstimate, taus=None) -> QuantileCurve:
    return dist.quantile_curve(taus)


def unconditional_rn_cdf(dists: Sequence[DistributionEstimate]) -> DistributionEstimate:
    """Pointwise average of the CDFs (and densities) on the union grid."""
    if len(dists) == 0:
        raise InputError("need at least one distribution")
    if len(dists) == 1:
        return dists[0]
    horizons = {d.horizon_days for d in dists}
    if len(horizons) > 1:
        raise MixedHorizon(f"horizons differ: {sorted(h for h in horizons if h is not None)}")
    first = dists[0].grid
    if all(d.grid.size == first.size and np.array_equal(d.grid, first) for d in dists):
        grid = first
        cdf = np.mean([d.cdf for d in dists], axis=0)
        pdf = np.mean([d.pdf for d in dists], axis=0)
    else:
        grid = np.unique(np.concatenate([d.grid for d in dists]))
        cdf = np.mean([d.cdf_at(grid) for d in dists], axis=0)
        pdf = np.mean([d.pdf_at(grid) for d in dists], axis=0)
    rfs = [d.rf for d in dists if d.rf is not None]
    return DistributionEstimate(
        grid, cdf, pdf, dists[0].measure, None, dists[0].horizon_days, float(np.mean(rfs)) if rfs else None
    )


# ----------------------------------------------------------------------------
# moments


def _quantile_nodes(dist: DistributionEstimate, tau_cap: float = 1.0):
    """Nodes (tau_i, Q(tau_i)) on which Q is piecewise linear, up to tau_cap.

    Mass below the grid sits at grid[0] and mass above at grid[-1].
    """
    taus = np.concatenate([[0.0], dist.cdf, [1.0]])
    vals = np.concatenate([[dist.grid[0]], dist.grid, [dist.grid[-1]]])
    if tau_cap >= 1.0:
        return taus, vals
    keep = taus < tau_cap
    qcap = dist.quantile([tau_cap])[0]
    return np.append(taus[keep], tau_cap), np.append(vals[keep], qcap)


def rn_moments(dist: DistributionEstimate, rf: float | None = None, orders=(1, 2, 3), tau_cap: float = 1.0) -> np.ndarray:
    """int_0^tau_cap [Q(p) - R_f]^n dp for each n in ``orders`` by trapezoid on the quantile curve."""
    rf = dist.rf if rf is None else rf
    if rf is None:
        raise InputError("risk-free rate required")
    if not 0.0 < tau_cap <= 1.0:
        raise InputError("tau_cap must lie in (0, 1]")
    taus, vals = _quantile_nodes(dist, tau_cap)
    dt = np.diff(taus)
    dev = vals - rf
    out = []
    for n in orders:
        if n not in (1, 2, 3, 4):
            raise InputError("moment order must be 1..4")
        g = dev**n
        out.append(float(np.sum(dt * 0.5 * (g[1:] + g[:-1]))))
    return np.array(out)


def rn_moment(dist: DistributionEstimate, n: int, rf: float | None = None) -> float:
    return float(rn_moments(dist, rf, (n,))[0])


def rn_truncated_moment(dist: DistributionEstimate, n: int, rf: float | None = None, tau_cap: float = 1.0) -> float:
    return float(rn_moments(dist, rf, (n,), tau_cap)[0])
