"""Analytic models with closed-form physical and risk-neutral objects.

Each model exposes ``cdf``/``quantile``/``pdf`` under either measure, the
gross risk-free rate, the physical return moments and the SDF volatility,
plus a sampler of (R, M) pairs for Monte Carlo checks.
"""

from __future__ import annotations

import datetime as _dt
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, ClassVar

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import poisson

from ._validation import DEFAULT_TAUS, check_positive, check_taus
from .bounds import ODC, BoundCurve, hj_bound, local_bound
from .exceptions import (
    ConfigError,
    DivergentTilt,
    InputError,
    MomentUndefined,
    OutOfSupport,
)
from .marketdata import ReturnSeries
from .rnd import DistributionEstimate, GridSpec

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

MEASURES = ("physical", "risk_neutral")
_SQRT2PI = math.sqrt(2.0 * math.pi)


def _check_measure(measure: str) -> str:
    if measure not in MEASURES:
        raise InputError(f"measure must be one of {MEASURES}")
    return measure


def _bisect(fun: Callable, lo, hi, target, iters: int = 200, tol: float = 1e-14):
    """Vectorised bisection for increasing ``fun`` with fun(lo) <= target <= fun(hi)."""
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        up = fun(mid) >= target
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
        if np.all(hi - lo <= tol * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi)


class ModelSpec(ABC):
    kind: ClassVar[str]
    # Bounds and SDF volatility are multiplied by this factor on output.
    bound_scale: float = 1.0

    @abstractmethod
    def cdf(self, x, measure: str = "physical") -> np.ndarray: ...

    @abstractmethod
    def quantile(self, taus, measure: str = "risk_neutral") -> np.ndarray: ...

    @property
    @abstractmethod
    def rf(self) -> float: ...

    @abstractmethod
    def return_moments(self) -> tuple[float, float]:
        """Physical mean and standard deviation of R."""

    @abstractmethod
    def sdf_vol(self) -> float: ...

    @abstractmethod
    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Draw n (R, M) pairs under the physical measure."""

    def odc(self, taus=None) -> ODC:
        taus = DEFAULT_TAUS if taus is None else check_taus(taus)
        return ODC(taus, self.cdf(self.quantile(taus, "risk_neutral"), "physical"))

    def hj(self) -> float:
        m, s = self.return_moments()
        return hj_bound(m, s, self.rf)

    def params(self) -> dict:
        return {k: v for k, v in asdict(self).items()}

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params()}


# ----------------------------------------------------------------------------
# joint normal


@dataclass(frozen=True)
class JointNormal(ModelSpec):
    """(R, M) bivariate normal.  Pricing requires mu_M mu_R + rho sigma_M sigma_R = 1."""

    mu_R: float
    sigma_R: float
    mu_M: float
    sigma_M: float
    rho: float
    kind: ClassVar[str] = "joint_normal"

    def __post_init__(self):
        check_positive(self.sigma_R, "sigma_R")
        check_positive(self.mu_M, "mu_M")
        if self.sigma_M < 0 or not -1 < self.rho < 1:
            raise InputError("need sigma_M >= 0 and |rho| < 1")
        gap = self.mu_M * self.mu_R + self.rho * self.sigma_M * self.sigma_R - 1.0
        if abs(gap) > 1e-8:
            raise InputError(f"E[MR] = 1 violated by {gap:.3g}; use JointNormal.priced")

    @classmethod
    def priced(cls, mu_M: float, sigma_M: float, sigma_R: float, rho: float) -> "JointNormal":
        return cls((1.0 - rho * sigma_M * sigma_R) / mu_M, sigma_R, mu_M, sigma_M, rho)

    @property
    def rf(self) -> float:
        return 1.0 / self.mu_M

    @property
    def _tilt(self) -> float:
        return self.rho * self.sigma_M / self.mu_M

    def cdf(self, x, measure="physical"):
        z = (np.asarray(x, dtype=float) - self.mu_R) / self.sigma_R
        if _check_measure(measure) == "physical":
            return ndtr(z)
        # E[M 1{R<=x}] / E[M]
        return ndtr(z) - self._tilt * np.exp(-0.5 * z * z) / _SQRT2PI

    def pdf(self, x, measure="physical"):
        z = (np.asarray(x, dtype=float) - self.mu_R) / self.sigma_R
        dens = np.exp(-0.5 * z * z) / (_SQRT2PI * self.sigma_R)
        return dens if _check_measure(measure) == "physical" else dens * (1.0 + self._tilt * z)

    def _z_range(self) -> float:
        # The risk-neutral "density" is positive only while 1 + tilt*z > 0.
        return min(40.0, 1.0 / abs(self._tilt)) if self._tilt else 40.0

    def quantile(self, taus, measure="risk_neutral"):
        t = np.asarray(taus, dtype=float)
        if _check_measure(measure) == "physical":
            return self.mu_R + self.sigma_R * ndtri(t)
        zr = self._z_range()
        lo, hi = -zr if self._tilt > 0 else -40.0, zr if self._tilt < 0 else 40.0
        Flo, Fhi = self.cdf(self.mu_R + lo * self.sigma_R, measure), self.cdf(self.mu_R + hi * self.sigma_R, measure)
        if np.any(t < Flo) or np.any(t > Fhi):
            raise OutOfSupport("tau outside the range where the risk-neutral CDF is increasing")
        z = _bisect(lambda z: self.cdf(self.mu_R + z * self.sigma_R, measure), lo, hi, t)
        return self.mu_R + z * self.sigma_R

    def return_moments(self):
        return self.mu_R, self.sigma_R

    def sdf_vol(self):
        return self.sigma_M

    def sample(self, n, rng):
        z1 = rng.standard_normal(n)
        z2 = self.rho * z1 + math.sqrt(1 - self.rho**2) * rng.standard_normal(n)
        return self.mu_R + self.sigma_R * z1, self.mu_M + self.sigma_M * z2


# ----------------------------------------------------------------------------
# lognormal


@dataclass(frozen=True)
class Lognormal(ModelSpec):
    """log R ~ N((mu_R - sigma_R^2/2) lam, sigma_R^2 lam), M lognormal with log-vol sigma_M.

    When ``sigma_M``/``rho`` are omitted the SDF is taken perfectly correlated
    with R (Black-Scholes), sigma_M = |mu_R - r_f| / sigma_R.
    """

    mu_R: float
    sigma_R: float
    r_f: float
    lam: float = 1.0
    sigma_M: float | None = None
    rho: float | None = None
    kind: ClassVar[str] = "lognormal"

    def __post_init__(self):
        check_positive(self.sigma_R, "sigma_R")
        check_positive(self.lam, "lam")
        if self.sigma_M is None or self.rho is None:
            if self.sigma_M is not None or self.rho is not None:
                raise InputError("give both sigma_M and rho or neither")
            excess = self.mu_R - self.r_f
            object.__setattr__(self, "sigma_M", abs(excess) / self.sigma_R)
            object.__setattr__(self, "rho", -1.0 if excess >= 0 else 1.0)
        gap = self.mu_R - self.r_f + self.rho * self.sigma_R * self.sigma_M
        if abs(gap) > 1e-10:
            raise InputError(f"mu_R - r_f = -rho sigma_R sigma_M violated by {gap:.3g}; use Lognormal.from_sdf")

    @classmethod
    def from_sdf(cls, sigma_R: float, r_f: float, sigma_M: float, rho: float, lam: float = 1.0) -> "Lognormal":
        return cls(r_f - rho * sigma_R * sigma_M, sigma_R, r_f, lam, sigma_M, rho)

    @property
    def rf(self) -> float:
        return math.exp(self.r_f * self.lam)

    def log_params(self, measure="physical") -> tuple[float, float]:
        drift = self.mu_R if _check_measure(measure) == "physical" else self.r_f
        return (drift - 0.5 * self.sigma_R**2) * self.lam, self.sigma_R * math.sqrt(self.lam)

    def cdf(self, x, measure="physical"):
        m, s = self.log_params(measure)
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x > 0, ndtr((np.log(np.maximum(x, 1e-300)) - m) / s), 0.0)

    def pdf(self, x, measure="physical"):
        m, s = self.log_params(measure)
        x = np.asarray(x, dtype=float)
        xs = np.maximum(x, 1e-300)
        return np.where(x > 0, np.exp(-0.5 * ((np.log(xs) - m) / s) ** 2) / (xs * s * _SQRT2PI), 0.0)

    def quantile(self, taus, measure="risk_neutral"):
        m, s = self.log_params(measure)
        return np.exp(m + s * ndtri(np.asarray(taus, dtype=float)))

    def return_moments(self):
        mean = math.exp(self.mu_R * self.lam)
        return mean, mean * math.sqrt(math.expm1(self.sigma_R**2 * self.lam))

    def sdf_vol(self):
        return math.exp(-self.r_f * self.lam) * math.sqrt(math.expm1(self.sigma_M**2 * self.lam))

    def sample(self, n, rng):
        z1 = rng.standard_normal(n)
        z2 = self.rho * z1 + math.sqrt(max(0.0, 1 - self.rho**2)) * rng.standard_normal(n)
        m, s = self.log_params("physical")
        sl = math.sqrt(self.lam)
        M = np.exp(-(self.r_f + 0.5 * self.sigma_M**2) * self.lam + self.sigma_M * sl * z2)
        return np.exp(m + s * z1), M

    def distribution(self, measure="risk_neutral", grid: GridSpec | None = None, **meta) -> DistributionEstimate:
        g = (grid or GridSpec()).points()
        return DistributionEstimate.from_functions(
            g, lambda x: self.cdf(x, measure), lambda x: self.pdf(x, measure), measure=measure, rf=self.rf, **meta
        )


def lognormal_efficiency(model: Lognormal) -> float:
    """Linearised minimum over tau of HJ / local bound."""
    v = model.sigma_R**2 * model.lam
    if v < 1e-12:
        return _SQRT2PI / 2.0
    return 0.5 * math.sqrt(2.0 * math.pi * v / math.expm1(v))


def efficiency_scan(model: ModelSpec, taus=None) -> float:
    """Exact min over a tau grid of HJ / local bound (points with zero local bound skipped)."""
    taus = np.arange(1, 100000) / 100000 if taus is None else check_taus(taus)
    loc = local_bound(model.odc(taus), model.rf, 0.0).values
    ok = loc > 0
    if not np.any(ok):
        return float("inf")
    return float(np.min(model.hj() / loc[ok]))


def lognormal_truncated_moments(m, s, rf, q, orders=(1, 2, 3)):
    """E[(R - rf)^k] and E[(R - rf)^k 1{R <= q}] for log R ~ N(m, s^2), vectorised.

    Returns two arrays of shape (len(orders),) + broadcast shape.
    """
    m, s, rf, q = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (m, s, rf, q)))
    lq = np.log(q)
    full, trunc = [], []
    for k in orders:
        a = np.zeros(m.shape)
        b = np.zeros(m.shape)
        for j in range(k + 1):
            e = math.comb(k, j) * (-rf) ** (k - j) * np.exp(j * m + 0.5 * j * j * s * s)
            a = a + e
            b = b + e * ndtr((lq - m - j * s * s) / s)
        full.append(a)
        trunc.append(b)
    return np.array(full), np.array(trunc)


# ----------------------------------------------------------------------------
# Pareto


@dataclass(frozen=True)
class Pareto(ModelSpec):
    """M = A U^alpha, R = B U^(-beta) with U uniform on (0, 1)."""

    A: float
    alpha: float
    B: float
    beta: float
    kind: ClassVar[str] = "pareto"
    tol: ClassVar[float] = 1e-8

    def __post_init__(self):
        for name in ("A", "alpha", "B", "beta"):
            check_positive(getattr(self, name), name)
        gap = self.A * self.B - (self.alpha - self.beta + 1.0)
        if abs(gap) > self.tol:
            raise InputError(
                f"AB = alpha - beta + 1 violated by {gap:.3g}; build with Pareto.calibrate or Pareto.from_alpha_beta"
            )

    @classmethod
    def from_alpha_beta(cls, alpha: float, beta: float, rf: float = 1.0) -> "Pareto":
        A = (alpha + 1.0) / rf
        return cls(A, alpha, (alpha - beta + 1.0) / A, beta)

    @classmethod
    def calibrate(cls, alpha: float, equity_premium: float, rf: float = 1.0) -> "Pareto":
        """Solve for beta (and B) so that E(R) - R_f equals the target premium."""
        A = (alpha + 1.0) / rf
        c = A * (rf + equity_premium)
        if c <= 1.0:
            raise InputError("target premium too small for this alpha")
        beta = (c - alpha - 1.0) / (c - 1.0)
        if not 0 < beta < 1:
            raise InputError(f"calibrated beta={beta:.4f} outside (0, 1)")
        return cls.from_alpha_beta(alpha, beta, rf)

    @property
    def rf(self) -> float:
        return (self.alpha + 1.0) / self.A

    def _shape(self, measure):
        return (1.0 if _check_measure(measure) == "physical" else self.alpha + 1.0) / self.beta

    def cdf(self, x, measure="physical"):
        x = np.asarray(x, dtype=float)
        z = self._shape(measure)
        return np.where(x >= self.B, 1.0 - (np.maximum(x, self.B) / self.B) ** (-z), 0.0)

    def pdf(self, x, measure="physical"):
        x = np.asarray(x, dtype=float)
        z = self._shape(measure)
        return np.where(x >= self.B, z / self.B * (np.maximum(x, self.B) / self.B) ** (-z - 1.0), 0.0)

    def quantile(self, taus, measure="risk_neutral"):
        t = np.asarray(taus, dtype=float)
        return self.B * (1.0 - t) ** (-1.0 / self._shape(measure))

    def mean_return(self) -> float:
        if self.beta >= 1:
            raise MomentUndefined("E(R) requires beta < 1")
        return self.B / (1.0 - self.beta)

    def equity_premium(self) -> float:
        return self.mean_return() - self.rf

    def return_moments(self):
        if self.beta >= 0.5:
            raise MomentUndefined("the HJ bound needs beta < 1/2 for a finite return variance")
        mean = self.mean_return()
        return mean, math.sqrt(self.B**2 / (1.0 - 2.0 * self.beta) - mean**2)

    def sharpe_ratio(self) -> float:
        m, s = self.return_moments()
        return (m - self.rf) / s

    def sdf_vol(self):
        a = self.alpha
        return self.A * math.sqrt(1.0 / (2 * a + 1) - 1.0 / (a + 1) ** 2)

    def local_bound_closed_form(self, taus) -> np.ndarray:
        t = np.asarray(taus, dtype=float)
        v = (1.0 - t) ** (1.0 / (self.alpha + 1.0))
        return self.A / (1.0 + self.alpha) * np.abs(t - 1.0 + v) / np.sqrt((1.0 - v) * v)

    def sample(self, n, rng):
        u = rng.random(n)
        u = np.where(u == 0.0, np.finfo(float).tiny, u)
        return self.B * u ** (-self.beta), self.A * u**self.alpha


# ----------------------------------------------------------------------------
# disaster


@dataclass(frozen=True)
class Disaster(ModelSpec):
    """Power utility over consumption growth with Poisson-normal jumps.

    dc = eps + eta, eps ~ N(mu, sigma^2), eta | J=j ~ N(j theta, j nu^2),
    J ~ Poisson(kappa); log M = log(beta_discount) - gamma dc.  The market is a
    claim on levered consumption, R = exp(leverage * dc) / c, where c makes
    E[M R] = 1.

    The risk-neutral law tilts by exp(-gamma dc): kappa and theta change as
    usual and, when ``tilt_normal_mean`` is set, the Gaussian mean shifts to
    mu - gamma sigma^2 (exact change of measure).  ``bound_scale`` converts the
    per-period calibration into another reporting unit, 1/sqrt(12) for annual
    parameters reported monthly.
    """

    beta_discount: float
    gamma: float
    mu: float
    sigma: float
    theta_jump: float
    nu: float
    kappa: float
    leverage: float
    j_max: int = 20
    tilt_normal_mean: bool = True
    bound_scale: float = 1.0
    kind: ClassVar[str] = "disaster"

    def __post_init__(self):
        check_positive(self.sigma, "sigma")
        check_positive(self.leverage, "leverage")
        check_positive(self.beta_discount, "beta_discount")
        if self.kappa < 0 or self.nu < 0 or self.gamma < 0:
            raise InputError("kappa, nu and gamma must be nonnegative")
        if self.j_max < 1:
            raise InputError("j_max must be >= 1")

    def mgf(self, s: float) -> float:
        """E exp(s dc) under the physical measure."""
        jump = math.exp(s * self.theta_jump + 0.5 * s * s * self.nu**2) - 1.0
        return math.exp(s * self.mu + 0.5 * s * s * self.sigma**2 + self.kappa * jump)

    def dc_params(self, measure="physical") -> tuple[float, float, float]:
        """(gaussian mean, jump intensity, jump mean) of dc under the measure."""
        if _check_measure(measure) == "physical":
            return self.mu, self.kappa, self.theta_jump
        g = self.gamma
        kt = self.kappa * math.exp(-g * self.theta_jump + 0.5 * (g * self.nu) ** 2)
        mt = self.mu - g * self.sigma**2 if self.tilt_normal_mean else self.mu
        return mt, kt, self.theta_jump - g * self.nu**2

    @property
    def rf(self) -> float:
        return 1.0 / (self.beta_discount * self.mgf(-self.gamma))

    @property
    def normaliser(self) -> float:
        return self.beta_discount * self.mgf(self.leverage - self.gamma)

    def dc_cdf(self, b, measure="physical"):
        m, k, th = self.dc_params(measure)
        j = np.arange(self.j_max + 1)
        w = poisson.pmf(j, k)
        b = np.asarray(b, dtype=float)
        sd = np.sqrt(self.sigma**2 + j * self.nu**2)
        return np.sum(w * ndtr((b[..., None] - m - j * th) / sd), axis=-1)

    def dc_pdf(self, b, measure="physical"):
        m, k, th = self.dc_params(measure)
        j = np.arange(self.j_max + 1)
        w = poisson.pmf(j, k)
        sd = np.sqrt(self.sigma**2 + j * self.nu**2)
        z = (np.asarray(b, dtype=float)[..., None] - m - j * th) / sd
        return np.sum(w * np.exp(-0.5 * z * z) / (_SQRT2PI * sd), axis=-1)

    def _to_dc(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return (np.log(np.maximum(x, 1e-300)) + math.log(self.normaliser)) / self.leverage

    def cdf(self, x, measure="physical"):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, self.dc_cdf(self._to_dc(x), measure), 0.0)

    def pdf(self, x, measure="physical"):
        x = np.asarray(x, dtype=float)
        xs = np.maximum(x, 1e-300)
        return np.where(x > 0, self.dc_pdf(self._to_dc(xs), measure) / (self.leverage * xs), 0.0)

    def quantile(self, taus, measure="risk_neutral"):
        t = np.asarray(taus, dtype=float)
        m, _, th = self.dc_params(measure)
        j = np.arange(self.j_max + 1)
        sd = np.sqrt(self.sigma**2 + j * self.nu**2)
        lo = float(np.min(m + j * th - 40 * sd))
        hi = float(np.max(m + j * th + 40 * sd))
        b = _bisect(lambda v: self.dc_cdf(v, measure), lo, hi, t)
        return np.exp(self.leverage * b) / self.normaliser

    def return_moments(self):
        c = self.normaliser
        m1 = self.mgf(self.leverage) / c
        m2 = self.mgf(2 * self.leverage) / c**2
        return m1, math.sqrt(m2 - m1 * m1)

    def sdf_vol(self):
        b = self.beta_discount
        return b * math.sqrt(self.mgf(-2 * self.gamma) - self.mgf(-self.gamma) ** 2)

    def sample_dc(self, n, rng, measure="physical"):
        m, k, th = self.dc_params(measure)
        J = rng.poisson(k, n)
        return m + self.sigma * rng.standard_normal(n) + J * th + np.sqrt(J) * self.nu * rng.standard_normal(n)

    def sample(self, n, rng):
        dc = self.sample_dc(n, rng)
        return np.exp(self.leverage * dc) / self.normaliser, self.beta_discount * np.exp(-self.gamma * dc)

    def truncation_error(self, measure="physical") -> float:
        _, k, _ = self.dc_params(measure)
        return float(poisson.sf(self.j_max, k))


# ----------------------------------------------------------------------------
# representative agent over a risk-neutral base


@dataclass(frozen=True)
class UtilityCoeffs:
    """theta_k = zeta^(k)(R_f) / k! for k = 1..3."""

    theta: tuple
    source: str = "empirical_default"

    @classmethod
    def empirical(cls, rf: float) -> "UtilityCoeffs":
        return cls((1.0 / rf, -1.0 / rf**2, 1.0 / rf**3), "empirical_default")


UTILITIES = ("log", "crra", "exponential")


@dataclass(frozen=True, eq=False)
class RepAgent(ModelSpec):
    """Physical law implied by a utility over a risk-neutral base distribution.

    With zeta = 1/M normalised so zeta(R_f) = 1, the physical CDF is
    F(x) = E~[zeta(R) 1{R <= x}] / E~[zeta(R)]: log zeta = x/R_f, CRRA
    zeta = (x/R_f)^gamma, exponential zeta = exp(gamma (x - R_f)).
    """

    utility: str
    gamma: float
    base: DistributionEstimate
    risk_free: float | None = None
    kind: ClassVar[str] = "rep_agent"

    def __post_init__(self):
        if self.utility not in UTILITIES:
            raise InputError(f"utility must be one of {UTILITIES}")
        if self.gamma < 0:
            raise InputError("gamma must be nonnegative")
        if self.utility == "log" and self.gamma != 1:
            object.__setattr__(self, "gamma", 1.0)
        if self.risk_free is None and self.base.rf is None:
            raise InputError("risk-free rate required")
        object.__setattr__(self, "_weights", None)

    @property
    def rf(self) -> float:
        return float(self.risk_free if self.risk_free is not None else self.base.rf)

    def zeta(self, x):
        x = np.asarray(x, dtype=float)
        if self.utility == "exponential":
            return np.exp(self.gamma * (x - self.rf))
        return (x / self.rf) ** (1.0 if self.utility == "log" else self.gamma)

    def zeta_derivative(self, x, k: int):
        x = np.asarray(x, dtype=float)
        g = self.gamma
        if self.utility == "exponential":
            return g**k * np.exp(g * (x - self.rf))
        if self.utility == "log":
            return x / self.rf if k == 0 else (np.full_like(x, 1.0 / self.rf) if k == 1 else np.zeros_like(x))
        coef = math.prod(g - i for i in range(k))
        return coef * self.rf ** (-g) * x ** (g - k)

    def coeffs(self) -> UtilityCoeffs:
        th = tuple(float(self.zeta_derivative(self.rf, k)) / math.factorial(k) for k in (1, 2, 3))
        return UtilityCoeffs(th, "model_derived")

    def _tilt(self):
        """Cell masses of the base distribution reweighted by zeta, normalised."""
        cached = object.__getattribute__(self, "_weights")
        if cached is not None:
            return cached
        d = self.base
        z = self.zeta(d.grid)
        dF = np.diff(d.cdf)
        cell = 0.5 * (z[1:] + z[:-1]) * dF
        lower = d.cdf[0] * z[0]
        upper = (1.0 - d.cdf[-1]) * z[-1]
        total = lower + cell.sum() + upper
        if not np.isfinite(total) or total <= 0:
            raise DivergentTilt(f"E~[zeta(R)] is not finite on the grid ({self.utility}, gamma={self.gamma})")
        if upper > 1e-3 * total:
            raise DivergentTilt("tilted mass escapes the upper end of the grid")
        cum = np.concatenate([[lower], lower + np.cumsum(cell)]) / total
        out = (cum, z, total)
        object.__setattr__(self, "_weights", out)
        return out

    def cdf(self, x, measure="physical"):
        if _check_measure(measure) == "risk_neutral" or (self.utility == "crra" and self.gamma == 0):
            return self.base.cdf_at(x)
        cum, _, _ = self._tilt()
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.base.grid, cum)
        return np.where(x < self.base.grid[0], 0.0, np.where(x >= self.base.grid[-1], 1.0, out))

    def quantile(self, taus, measure="risk_neutral"):
        if _check_measure(measure) == "risk_neutral":
            return self.base.quantile(taus)
        cum, _, _ = self._tilt()
        return DistributionEstimate(self.base.grid, cum, np.zeros_like(cum)).quantile(taus)

    def tilted_mean(self, power: int = 1) -> float:
        """E[R^power] under the physical measure."""
        d = self.base
        cum, z, total = self._tilt()
        g = d.grid**power * z
        cell = 0.5 * (g[1:] + g[:-1]) * np.diff(d.cdf)
        return float((d.cdf[0] * g[0] + cell.sum() + (1 - d.cdf[-1]) * g[-1]) / total)

    def equity_premium(self) -> float:
        return self.tilted_mean(1) - self.rf

    def return_moments(self):
        m = self.tilted_mean(1)
        return m, math.sqrt(max(self.tilted_mean(2) - m * m, 0.0))

    def sdf_vol(self):
        # Under P, M = E~[zeta] / (R_f zeta(R)); evaluated at the grid nodes.
        cum, z, total = self._tilt()
        m = (total / self.rf) / z
        w = np.diff(np.concatenate([[0.0], cum, [1.0]]))[:-1]
        mean = float(w @ m)
        return float(math.sqrt(max(w @ m**2 - mean**2, 0.0)))

    def sample(self, n, rng):
        u = rng.random(n)
        R = self.quantile(u, "physical")
        _, _, total = self._tilt()
        return R, (total / self.rf) / self.zeta(R)

    def crash_probability(self, tau: float) -> float:
        return float(self.cdf(self.base.quantile([tau])[0]))

    def params(self) -> dict:
        return {"utility": self.utility, "gamma": self.gamma, "rf": self.rf}


def physical_cdf_crra(base_rn: DistributionEstimate, gamma: float, x, rf: float | None = None):
    return RepAgent("crra", gamma, base_rn, rf).cdf(x)


# ----------------------------------------------------------------------------
# generic operations


def model_cdf(model: ModelSpec, measure: str, x):
    x = np.asarray(x, dtype=float)
    if isinstance(model, Pareto) and np.any(x < model.B):
        raise OutOfSupport(f"Pareto support starts at B={model.B}")
    if isinstance(model, (Lognormal, Disaster)) and np.any(x <= 0):
        raise OutOfSupport("gross returns must be positive")
    return model.cdf(x, measure)


@dataclass(frozen=True)
class ModelBounds:
    local: BoundCurve
    hj: float
    sdf_vol: float
    odc: ODC

    @property
    def peak_tau(self) -> float:
        return self.local.argmax

    def local_exceeds_hj(self) -> np.ndarray:
        return self.local.values > self.hj


def model_local_and_hj(model: ModelSpec, tau_grid=None, epsilon: float = 0.0) -> ModelBounds:
    """Exact local bound, HJ bound and SDF volatility, scaled by ``model.bound_scale``."""
    curve = model.odc(tau_grid)
    s = getattr(model, "bound_scale", 1.0)
    loc = local_bound(curve, model.rf, epsilon)
    loc = BoundCurve(loc.taus, loc.values * s, "local", loc.rf, phi=loc.phi)
    try:
        hj = model.hj() * s
    except MomentUndefined:
        hj = float("nan")
    return ModelBounds(loc, hj, model.sdf_vol() * s, curve)


@dataclass(frozen=True)
class HoeffdingCheck:
    lhs: float
    rhs: float
    se: float


def hoeffding_check(model: JointNormal, x: float, n_draws: int = 1_000_000, seed: int = 0) -> HoeffdingCheck:
    """-COV(1{R<=x}, M) against f_R(x) COV(R, M), both by simulation.

    ``se`` is the Monte Carlo standard error of lhs - rhs.
    """
    if not -1 < model.rho < 1:
        raise InputError("|rho| < 1 required")
    rng = np.random.default_rng(seed)
    R, M = model.sample(n_draws, rng)
    ind = (R <= x).astype(float)
    f = float(model.pdf(x))
    dm = M - M.mean()
    lhs_i = -(ind - ind.mean()) * dm
    rhs_i = f * (R - R.mean()) * dm
    d = lhs_i - rhs_i
    return HoeffdingCheck(float(lhs_i.mean()), float(rhs_i.mean()), float(d.std(ddof=1) / math.sqrt(n_draws)))


# ----------------------------------------------------------------------------
# configuration

_VARIANTS = {"joint_normal": JointNormal, "lognormal": Lognormal, "pareto": Pareto, "disaster": Disaster}
DEFAULT_DISASTER = Path(__file__).with_name("data") / "disaster_default.toml"


def model_from_dict(cfg: dict) -> ModelSpec:
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    params = dict(cfg.pop("params", {}))
    params.update(cfg)
    if kind not in _VARIANTS:
        raise ConfigError(f"unknown model variant {kind!r}; expected one of {sorted(_VARIANTS)}")
    cls = _VARIANTS[kind]
    if kind == "pareto" and "calibrate" in params:
        c = params.pop("calibrate")
        return Pareto.calibrate(c["alpha"], c["equity_premium"], c.get("rf", 1.0))
    if kind == "lognormal" and "mu_R" not in params:
        try:
            return Lognormal.from_sdf(**params)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
    if kind == "disaster" and "report_periods" in params:
        params["bound_scale"] = 1.0 / math.sqrt(params.pop("report_periods"))
    if kind == "joint_normal" and "mu_R" not in params:
        try:
            return JointNormal.priced(**params)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {kind}: {exc}") from None


def load_model(path) -> ModelSpec:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such model config")
    try:
        cfg = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return model_from_dict(cfg.get("model", cfg))


def default_disaster() -> Disaster:
    return load_model(DEFAULT_DISASTER)


# ----------------------------------------------------------------------------
# simulation


@dataclass(frozen=True, eq=False)
class SimulatedPanel:
    """Realised returns with the exact per-period laws that generated them."""

    kind: str
    returns: ReturnSeries
    models: Callable[[int], ModelSpec] = field(repr=False)
    mu: np.ndarray | None = None
    r: np.ndarray | None = None
    sigma: np.ndarray | None = None
    horizon: float = 1.0
    fixed: ModelSpec | None = None

    def __len__(self) -> int:
        return len(self.returns)

    def rn_quantiles(self, tau: float) -> np.ndarray:
        return self._quantiles(tau, "risk_neutral")

    def quantiles(self, tau: float) -> np.ndarray:
        return self._quantiles(tau, "physical")

    def _quantiles(self, tau, measure):
        if self.fixed is not None:
            return np.full(len(self), float(self.fixed.quantile([tau], measure)[0]))
        drift = self.mu if measure == "physical" else self.r
        T = self.horizon
        return np.exp((drift - 0.5 * self.sigma**2) * T + self.sigma * math.sqrt(T) * ndtri(tau))

    def rf(self) -> np.ndarray:
        if self.fixed is not None:
            return np.full(len(self), self.fixed.rf)
        return np.exp(self.r * self.horizon)

    def rn_dist(self, i: int, grid: GridSpec | None = None) -> DistributionEstimate:
        m = self.models(i)
        return m.distribution("risk_neutral", grid, date=self.returns.dates[i], horizon_days=self.horizon * 365.0)


def _dates(n, step_days):
    start = _dt.date(2000, 1, 3)
    return tuple(start + _dt.timedelta(days=int(i * step_days)) for i in range(n))


def simulate_dgp(kind: str, params: dict | None = None, n_periods: int = 1000, seed: int = 0) -> SimulatedPanel:
    """Simulate one panel.

    bs_timevarying: sigma ~ U(sigma_range), mu ~ U(mu_range), r ~ U(r_range)
    i.i.d. per period, log returns normal over ``horizon_days``/365 years.
    bs_fixed: constant mu, r, sigma.  disaster / pareto: i.i.d. draws from a
    fixed model (``params["model"]`` or the default calibration).
    """
    if n_periods < 1:
        raise InputError("n_periods must be >= 1")
    p = dict(params or {})
    rng = np.random.default_rng(seed)
    if kind in ("bs_timevarying", "bs_fixed"):
        days = p.get("horizon_days", 365 / 12 if kind == "bs_timevarying" else 365)
        T = days / 365.0
        if kind == "bs_timevarying":
            sig = rng.uniform(*p.get("sigma_range", (0.05, 0.35)), n_periods)
            mu = rng.uniform(*p.get("mu_range", (-0.02, 0.2)), n_periods)
            r = rng.uniform(*p.get("r_range", (0.0, 0.03)), n_periods)
        else:
            sig = np.full(n_periods, p.get("sigma", 0.2))
            mu = np.full(n_periods, p.get("mu", 0.08))
            r = np.full(n_periods, p.get("r", 0.02))
        z = rng.standard_normal(n_periods)
        R = np.exp((mu - 0.5 * sig**2) * T + sig * math.sqrt(T) * z)
        rs = ReturnSeries(_dates(n_periods, days), days, R, overlapping=False)
        return SimulatedPanel(
            kind, rs, lambda i: Lognormal(float(mu[i]), float(sig[i]), float(r[i]), T), mu, r, sig, T
        )
    if kind in ("disaster", "pareto"):
        model = p.get("model")
        if model is None:
            model = default_disaster() if kind == "disaster" else Pareto.calibrate(0.19, 0.08, 1.0)
        R, _ = model.sample(n_periods, rng)
        days = p.get("horizon_days", 365)
        rs = ReturnSeries(_dates(n_periods, days), days, R, overlapping=False)
        return SimulatedPanel(kind, rs, lambda i: model, horizon=days / 365.0, fixed=model)
    raise InputError(f"unknown DGP kind {kind!r}")


def bs_option_quotes(
    date: _dt.date,
    underlying: float,
    sigma: float,
    r: float,
    maturity_days: int,
    strikes,
):
    """Black-Scholes put and call quotes (bid = ask = model price) on a strike set."""
    from ._black import black_price
    from .marketdata import RawOptionQuote

    T = maturity_days / 365.0
    Rf = math.exp(r * T)
    F = underlying * Rf
    expiry = date + _dt.timedelta(days=int(maturity_days))
    K = np.asarray(strikes, dtype=float)
    out = []
    for flag, is_call in (("P", False), ("C", True)):
        prices = black_price(F, K, sigma, T, 1.0 / Rf, is_call)
        for k, pr in zip(K, prices):
            if pr > 0:
                out.append(RawOptionQuote(date, expiry, float(k), flag, float(pr), float(pr), underlying, Rf, F))
    return out


__all__ = [
    "ModelSpec",
    "JointNormal",
    "Lognormal",
    "Pareto",
    "Disaster",
    "RepAgent",
    "UtilityCoeffs",
    "model_cdf",
    "model_local_and_hj",
    "ModelBounds",
    "hoeffding_check",
    "lognormal_efficiency",
    "efficiency_scan",
    "lognormal_truncated_moments",
    "physical_cdf_crra",
    "simulate_dgp",
    "SimulatedPanel",
    "bs_option_quotes",
    "load_model",
    "model_from_dict",
    "default_disaster",
]
