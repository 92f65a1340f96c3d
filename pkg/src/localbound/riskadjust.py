"""Option-implied lower bound on the left-tail quantile gap.

LB bounds tau - F(Q~tau) from below using risk-neutral moments of the excess
return. Dividing by the risk-neutral density at Q~tau gives RA, the first-order
gap between the physical and risk-neutral quantiles. The remainder of that
expansion is neglected; outputs carry ``first_order_approx = True``.
"""

from __future__ import annotations

import datetime as _dt
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.special import ndtri

from .exceptions import (
    DenominatorNonpositive,
    InputError,
    NoRoot,
    NumericalError,
    StepOutOfRange,
    UnsupportedUtility,
)
from .models import Lognormal, ModelSpec, RepAgent, UtilityCoeffs, lognormal_truncated_moments
from .rnd import DistributionEstimate, _quantile_nodes, rn_moments

log = logging.getLogger(__name__)

DEFAULT_STEP = 0.001
RA_HEADER = ("date", "horizon", "tau", "q_tilde", "lb", "pdf_at_q", "ra", "q_hat", "lb_negative")


@dataclass(frozen=True)
class RiskAdjustment:
    date: _dt.date | None
    horizon_days: float | None
    tau: float
    lb: float
    pdf_at_q: float
    ra: float
    q_tilde: float
    q_hat: float
    first_order_approx: bool = True

    @property
    def lb_negative(self) -> bool:
        return self.lb < 0

    def to_row(self) -> list:
        return [
            "" if self.date is None else self.date.isoformat(),
            "" if self.horizon_days is None else f"{float(self.horizon_days):g}",
            repr(self.tau), repr(self.q_tilde), repr(self.lb), repr(self.pdf_at_q),
            repr(self.ra), repr(self.q_hat), int(self.lb_negative),
        ]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["date"] = None if self.date is None else self.date.isoformat()
        d["lb_negative"] = self.lb_negative
        return d


def _check_tau(tau: float, hi: float = 0.5) -> float:
    tau = float(tau)
    if not 0.0 < tau <= hi:
        raise InputError(f"tau must lie in (0, {hi}], got {tau}")
    return tau


def _rf(dist: DistributionEstimate, rf):
    rf = dist.rf if rf is None else rf
    if rf is None or not rf > 0:
        raise InputError("a positive gross risk-free rate is required")
    return float(rf)


def _theta(coeffs, rf) -> np.ndarray:
    if coeffs is None:
        coeffs = UtilityCoeffs.empirical(rf)
    th = np.asarray(coeffs.theta if isinstance(coeffs, UtilityCoeffs) else coeffs, dtype=float)
    if th.shape != (3,):
        raise InputError("theta must hold three coefficients")
    return th


# ----------------------------------------------------------------------------
# lower bound


def lb_from_moments(tau, full, trunc, theta):
    """sum_k theta_k (tau M_k - M_k(Q)) / (1 + sum_k theta_k M_k).

    ``full`` and ``trunc`` have shape (3, ...); ``theta`` has shape (3,) or (3, ...).
    """
    full = np.asarray(full, dtype=float)
    trunc = np.asarray(trunc, dtype=float)
    th = np.asarray(theta, dtype=float)
    if th.ndim == 1:
        th = th.reshape((3,) + (1,) * (full.ndim - 1))
    num = np.sum(th * (np.asarray(tau) * full - trunc), axis=0)
    den = 1.0 + np.sum(th * full, axis=0)
    if np.any(den <= 0):
        raise DenominatorNonpositive(f"1 + sum theta_k M_k = {np.min(den):.6g} <= 0")
    return num / den


def feasible_lb(dist: DistributionEstimate, rf: float | None = None, tau: float = 0.05, coeffs=None) -> float:
    """LB at one tau from the tabulated risk-neutral law."""
    tau = _check_tau(tau)
    rf = _rf(dist, rf)
    full = rn_moments(dist, rf, (1, 2, 3))
    trunc = rn_moments(dist, rf, (1, 2, 3), tau_cap=tau)
    if not (np.all(np.isfinite(full)) and np.all(np.isfinite(trunc))):
        raise NumericalError("risk-neutral moments are not finite")
    return float(lb_from_moments(tau, full, trunc, _theta(coeffs, rf)))


def feasible_lb_curve(dist: DistributionEstimate, taus, rf: float | None = None, coeffs=None) -> np.ndarray:
    return np.array([feasible_lb(dist, rf, t, coeffs) for t in np.atleast_1d(taus)])


def lb_lognormal(m, s, rf, tau, coeffs=None):
    """Closed-form (Q~tau, LB) when log R ~ N(m, s^2) under the risk-neutral law; vectorised."""
    tau = _check_tau(tau)
    m, s, rf = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (m, s, rf)))
    q = np.exp(m + s * ndtri(tau))
    full, trunc = lognormal_truncated_moments(m, s, rf, q)
    if coeffs is None:
        theta = np.stack([1.0 / rf, -1.0 / rf**2, 1.0 / rf**3])
    else:
        theta = _theta(coeffs, None)
    return q, lb_from_moments(tau, full, trunc, theta)


# ----------------------------------------------------------------------------
# reciprocal density and RA


def reciprocal_density(dist: DistributionEstimate, tau: float, h: float = DEFAULT_STEP) -> float:
    """(Q~(tau+h) - Q~(tau-h)) / 2h."""
    if not h > 0:
        raise StepOutOfRange("h must be positive")
    lo, hi = tau - h, tau + h
    if lo <= max(0.0, dist.cdf[0]) or hi >= min(1.0, dist.cdf[-1]):
        raise StepOutOfRange(f"tau +/- h = [{lo:.4g}, {hi:.4g}] leaves the fitted range")
    q = dist.quantile([lo, hi])
    return float((q[1] - q[0]) / (2.0 * h))


def gateaux_ra(lb: float, dist: DistributionEstimate, tau: float, h: float = DEFAULT_STEP) -> float:
    return float(lb) * reciprocal_density(dist, tau, h)


def quantile_predictor(q_tilde, ra):
    return np.asarray(q_tilde, dtype=float) + np.asarray(ra, dtype=float)


def crossing_count(q_hat) -> int:
    """Adjacent-tau decreases in Q^; rows are dates and columns increasing taus."""
    q = np.atleast_2d(np.asarray(q_hat, dtype=float))
    return int(np.sum(np.diff(q, axis=-1) < 0))


def risk_adjustment(
    dist: DistributionEstimate,
    tau: float,
    rf: float | None = None,
    coeffs=None,
    h: float = DEFAULT_STEP,
) -> RiskAdjustment:
    rf = _rf(dist, rf)
    lb = feasible_lb(dist, rf, tau, coeffs)
    inv = reciprocal_density(dist, tau, h)
    if not inv > 0:
        raise NumericalError(f"risk-neutral quantile is flat around tau={tau}")
    q = float(dist.quantile([tau])[0])
    ra = lb * inv
    if lb < 0:
        log.warning("negative LB %.4g at tau=%s, date=%s", lb, tau, dist.date)
    return RiskAdjustment(dist.date, dist.horizon_days, float(tau), lb, 1.0 / inv, ra, q, q + ra)


def risk_adjustments(dists, taus, coeffs=None, h: float = DEFAULT_STEP) -> list[RiskAdjustment]:
    return [risk_adjustment(d, t, None, coeffs, h) for d in dists for t in np.atleast_1d(taus)]


# ----------------------------------------------------------------------------
# log-utility crash probability


def crash_prob_log_utility(dist: DistributionEstimate, rf: float | None = None, tau: float = 0.05) -> float:
    """P(R <= Q~tau) for a log-utility agent: E~[1{R <= Q~tau} R] / R_f."""
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise InputError("tau must lie in (0, 1)")
    rf = _rf(dist, rf)
    m1 = rn_moments(dist, rf, (1,), tau_cap=tau)[0]
    return float((m1 + rf * tau) / rf)


# ----------------------------------------------------------------------------
# validity threshold


def _zeta4_sign(model: RepAgent) -> int:
    g = model.gamma
    if model.utility == "log":
        return 0
    if model.utility == "exponential":
        return 0 if g == 0 else 1
    return int(np.sign(g * (g - 1) * (g - 2) * (g - 3)))


def g_function(model: RepAgent, x) -> np.ndarray:
    """(x-R_f)^4/4! int_0^1 zeta''''(R_f + s(x-R_f)) (1-s)^3 ds by adaptive quadrature."""
    rf = model.rf
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    for i, xi in enumerate(x):
        d = xi - rf
        if d == 0:
            out[i] = 0.0
            continue
        val, _ = integrate.quad(
            lambda s: float(model.zeta_derivative(rf + s * d, 4)) * (1.0 - s) ** 3, 0.0, 1.0, limit=200
        )
        out[i] = d**4 / 24.0 * val
    return out


def g_taylor(model: RepAgent, x) -> np.ndarray:
    """Same quantity from the cubic Taylor remainder of zeta; the two agree exactly in theory."""
    rf = model.rf
    x = np.asarray(x, dtype=float)
    d = x - rf
    poly = sum(float(model.zeta_derivative(rf, k)) / math.factorial(k) * d**k for k in range(4))
    return (model.zeta(x) - poly) / 4.0


def validity_tau_star(model: RepAgent, dist: DistributionEstimate | None = None, n_scan: int = 500) -> float:
    """Smallest tau in (0, 0.5) with G(Q~tau) = E~[G(R)].

    Returns 1.0 when zeta'''' vanishes identically (every tau is valid).
    """
    if not isinstance(model, RepAgent):
        raise UnsupportedUtility("a representative-agent model with log, CRRA or exponential utility is required")
    sign = _zeta4_sign(model)
    if sign == 0:
        return 1.0
    if sign > 0:
        raise UnsupportedUtility(f"zeta'''' > 0 for {model.utility} utility with gamma={model.gamma}")
    dist = model.base if dist is None else dist
    taus, vals = _quantile_nodes(dist)
    gv = g_function(model, vals)
    mean_g = float(np.sum(np.diff(taus) * 0.5 * (gv[1:] + gv[:-1])))

    def gamma_prime(t):
        return float(g_function(model, dist.quantile([t]))[0]) - mean_g

    lo_tau = max(dist.cdf[0], 0.0) + 1e-6
    grid = np.linspace(lo_tau, 0.5, n_scan)
    vals_gp = np.array([gamma_prime(t) for t in grid])
    signs = np.sign(vals_gp)
    hit = np.nonzero(signs[1:] != signs[:-1])[0]
    if signs[0] == 0:
        return float(grid[0])
    if hit.size == 0:
        profile = "".join("+" if v > 0 else "-" if v < 0 else "0" for v in vals_gp[:: max(1, n_scan // 20)])
        raise NoRoot("Gamma' has no sign change on (0, 0.5)", profile)
    i = hit[0]
    if signs[i + 1] == 0:
        return float(grid[i + 1])
    return float(optimize.brentq(gamma_prime, grid[i], grid[i + 1], xtol=1e-10))


# ----------------------------------------------------------------------------
# first-order (Gateaux) approximation along the mixture path


def mixture_quantile(model: ModelSpec, tau: float, lam: float) -> float:
    """Quantile of (1-lam) F~ + lam F."""

    def f(x):
        return float((1 - lam) * model.cdf(x, "risk_neutral") + lam * model.cdf(x, "physical")) - tau

    if not 0.0 <= lam <= 1.0:
        raise InputError("lam must lie in [0, 1]")
    q_rn = float(model.quantile([tau], "risk_neutral")[0])
    q_ph = float(model.quantile([tau], "physical")[0])
    if lam == 0.0 or q_rn == q_ph:
        return q_rn
    if lam == 1.0:
        return q_ph
    a, b = min(q_rn, q_ph), max(q_rn, q_ph)
    fa, fb = f(a), f(b)
    # the endpoints solve the pure laws; rounding can leave them on the wrong side
    if fa >= 0.0:
        return a
    if fb <= 0.0:
        return b
    return float(optimize.brentq(f, a, b, xtol=1e-14, rtol=1e-15))


def gateaux_residual(model: ModelSpec, tau: float, lam: float = 1.0) -> float:
    """Q_lam - [Q~ + lam (tau - F(Q~)) / f~(Q~)] for the mixture law at weight lam."""
    q = float(model.quantile([tau], "risk_neutral")[0])
    first = lam * (tau - float(model.cdf(q, "physical"))) / float(model.pdf(q, "risk_neutral"))
    return mixture_quantile(model, tau, lam) - (q + first)


def first_order_quantile(model: ModelSpec, taus) -> np.ndarray:
    """Q~ + (tau - F(Q~)) / f~(Q~) with the exact physical CDF."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    q = model.quantile(taus, "risk_neutral")
    return q + (taus - model.cdf(q, "physical")) / model.pdf(q, "risk_neutral")


def predicted_quantile_lognormal(model: Lognormal, taus, coeffs=None) -> np.ndarray:
    """Q^ = Q~ + LB / f~(Q~) with closed-form moments and density."""
    m, s = model.log_params("risk_neutral")
    out = []
    for t in np.atleast_1d(taus):
        q, lb = lb_lognormal(m, s, model.rf, t, coeffs)
        out.append(float(q + lb / model.pdf(q, "risk_neutral")))
    return np.array(out)


__all__ = [
    "RiskAdjustment",
    "lb_from_moments",
    "feasible_lb",
    "feasible_lb_curve",
    "lb_lognormal",
    "reciprocal_density",
    "gateaux_ra",
    "quantile_predictor",
    "crossing_count",
    "risk_adjustment",
    "risk_adjustments",
    "crash_prob_log_utility",
    "g_function",
    "g_taylor",
    "validity_tau_star",
    "mixture_quantile",
    "gateaux_residual",
    "first_order_quantile",
    "predicted_quantile_lognormal",
]
