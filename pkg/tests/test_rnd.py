import math

import numpy as np
import pytest
from scipy.stats import norm

from conftest import bs_quotes
from localbound._black import black_price, implied_vol
from localbound.exceptions import BracketingError, InputError, MixedHorizon, TooFewStrikes
from localbound.marketdata import clean_quotes
from localbound.rnd import (
    DistributionEstimate,
    GridSpec,
    fit_rn_distribution,
    interpolate_maturity,
    rn_moments,
    unconditional_rn_cdf,
)


def lognormal_cdf(x, sigma, T, r=0.0):
    return norm.cdf((np.log(x) - (r - 0.5 * sigma**2) * T) / (sigma * math.sqrt(T)))


def fitted(sigma, days, r=0.0, **kw):
    return fit_rn_distribution(clean_quotes(bs_quotes(sigma, days, r=r, **kw))[0])


def test_implied_vol_inverts_black():
    K = np.linspace(70, 130, 13)
    calls = K >= 100
    p = black_price(100.0, K, 0.23, 0.25, 0.99, calls)
    np.testing.assert_allclose(implied_vol(p, 100.0, K, 0.25, 0.99, calls), 0.23, atol=1e-7)


@pytest.mark.parametrize("sigma,days,r", [(0.15, 30, 0.0), (0.3, 60, 0.02), (0.2, 91, 0.05)])
def test_recovers_lognormal(sigma, days, r):
    d = fitted(sigma, days, r)
    T = days / 365
    x = d.grid
    band = (x >= 0.8) & (x <= 1.2)
    assert np.max(np.abs(d.cdf - lognormal_cdf(x, sigma, T, r))[band]) < 0.005
    rf = math.exp(r * T)
    assert abs(rn_moments(d, rf, (1,))[0]) / rf < 0.005
    assert d.rf == pytest.approx(rf)
    assert not d.flags


def test_variance_matches_lognormal():
    sigma, T = 0.2, 30 / 365
    d = fitted(sigma, 30)
    assert rn_moments(d, 1.0, (2,))[0] == pytest.approx(math.expm1(sigma**2 * T), rel=0.02)


def test_quantile_inverts_cdf():
    d = fitted(0.2, 30)
    taus = np.array([0.01, 0.1, 0.5, 0.9])
    np.testing.assert_allclose(d.cdf_at(d.quantile(taus)), taus, atol=1e-10)


def test_too_few_strikes():
    with pytest.raises(TooFewStrikes):
        fitted(0.2, 30, n=5)
    with pytest.raises(TooFewStrikes):
        fitted(0.2, 30, lo=0.9, hi=1.3)


def test_maturity_interpolation_total_variance():
    a, b = fitted(0.15, 20), fitted(0.25, 40)
    c = interpolate_maturity(a, b, 30)
    assert c.horizon_days == 30
    expected = math.sqrt((0.15**2 * 20 + 0.25**2 * 40) / 2 / 30)
    np.testing.assert_allclose(c.smile.vols, expected, rtol=1e-6)
    assert interpolate_maturity(a, b, 20) is a
    with pytest.raises(BracketingError):
        interpolate_maturity(a, b, 50)


def test_serialisation_round_trip():
    d = fitted(0.2, 30)
    back = DistributionEstimate.from_dict(d.to_dict())
    np.testing.assert_array_equal(back.cdf, d.cdf)
    assert back.smile.vols.tolist() == d.smile.vols.tolist()
    assert back.date == d.date


def test_distribution_validation():
    g = np.linspace(0, 1, 5)
    with pytest.raises(InputError):
        DistributionEstimate(g, g[::-1], np.ones(5))
    d = DistributionEstimate(g, 0.5 * g, np.ones(5))
    assert any("right tail" in f for f in d.flags)


def test_unconditional_average():
    g = GridSpec(0.5, 1.5, 101).points()
    a = DistributionEstimate(g, np.clip(g - 0.5, 0, 1), np.ones_like(g), horizon_days=30)
    b = DistributionEstimate(g, (g >= 1.0).astype(float), np.zeros_like(g), horizon_days=30)
    u = unconditional_rn_cdf([a, b])
    np.testing.assert_allclose(u.cdf, 0.5 * (a.cdf + b.cdf))
    with pytest.raises(MixedHorizon):
        unconditional_rn_cdf([a, b.with_meta(horizon_days=60)])
