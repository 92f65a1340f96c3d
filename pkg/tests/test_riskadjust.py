import math

import numpy as np
import pytest
from scipy.special import ndtr

from localbound.exceptions import InputError, StepOutOfRange, UnsupportedUtility
from localbound.models import Lognormal, RepAgent, UtilityCoeffs
from localbound.riskadjust import (
    RA_HEADER,
    crash_prob_log_utility,
    crossing_count,
    feasible_lb,
    g_function,
    g_taylor,
    gateaux_residual,
    lb_lognormal,
    reciprocal_density,
    risk_adjustment,
    risk_adjustments,
    validity_tau_star,
)
from localbound.rnd import GridSpec

BS = Lognormal(0.08, 0.2, 0.02, 1.0)
MONTH = Lognormal(0.08, 0.2, 0.02, 30 / 365)


@pytest.fixture(scope="module")
def annual():
    return BS.distribution("risk_neutral", GridSpec(0.3, 2.0, 2001))


@pytest.fixture(scope="module")
def monthly():
    return MONTH.distribution("risk_neutral", GridSpec(0.3, 2.0, 2001))


def test_empirical_coefficients():
    assert UtilityCoeffs.empirical(1.02).theta == pytest.approx((1 / 1.02, -1 / 1.02**2, 1 / 1.02**3))


def test_lb_matches_closed_form(annual):
    m, s = BS.log_params("risk_neutral")
    for tau in (0.01, 0.05, 0.2, 0.5):
        q, lb = lb_lognormal(m, s, BS.rf, tau)
        assert feasible_lb(annual, tau=tau) == pytest.approx(float(lb), rel=2e-3, abs=1e-6)
        assert float(q) == pytest.approx(BS.quantile([tau])[0], rel=1e-10)


def test_lb_close_to_true_gap(annual):
    # log-normal with log utility coefficients is near the exact tau - F(Q~)
    q = BS.quantile([0.05])[0]
    gap = 0.05 - float(BS.cdf(q, "physical"))
    assert feasible_lb(annual, tau=0.05) == pytest.approx(gap, rel=0.06)


def test_lb_rejects_upper_taus(annual):
    with pytest.raises(InputError):
        feasible_lb(annual, tau=0.7)


def test_reciprocal_density(annual):
    q = BS.quantile([0.05])[0]
    assert reciprocal_density(annual, 0.05) * float(BS.pdf(q, "risk_neutral")) == pytest.approx(1.0, abs=5e-4)
    with pytest.raises(StepOutOfRange):
        reciprocal_density(annual, 0.0005)


def test_risk_adjustment_record(annual):
    r = risk_adjustment(annual, 0.05)
    assert r.q_hat == pytest.approx(r.q_tilde + r.ra)
    assert r.ra == pytest.approx(r.lb / r.pdf_at_q)
    assert not r.lb_negative
    row = r.to_row()
    assert len(row) == len(RA_HEADER)


def test_risk_adjustments_grid(monthly):
    taus = [0.05, 0.1, 0.2]
    recs = risk_adjustments([monthly, monthly], taus)
    assert len(recs) == 6
    q_hat = np.array([r.q_hat for r in recs]).reshape(2, 3)
    assert crossing_count(q_hat) == 0
    assert crossing_count(np.array([[1.0, 0.9, 1.1]])) == 1


def test_crash_probability_closed_form(monthly):
    m, s = MONTH.log_params("risk_neutral")
    q = MONTH.quantile([0.05])[0]
    exact = math.exp(m + s * s / 2) * ndtr((math.log(q) - m - s * s) / s) / MONTH.rf
    assert crash_prob_log_utility(monthly, tau=0.05) == pytest.approx(exact, rel=1e-4)
    assert crash_prob_log_utility(monthly, tau=0.05) < 0.05


def test_g_function_matches_taylor_remainder(annual):
    agent = RepAgent("crra", 2.5, annual)
    x = np.linspace(0.5, 1.8, 7)
    np.testing.assert_allclose(g_function(agent, x), g_taylor(agent, x), atol=1e-12)


def test_tau_star_cases(annual):
    # cubic or lower zeta: the expansion is exact
    assert validity_tau_star(RepAgent("log", 1.0, annual)) == 1.0
    assert validity_tau_star(RepAgent("crra", 2.0, annual)) == 1.0
    t = validity_tau_star(RepAgent("crra", 0.5, annual))
    assert 0.05 < t < 0.12
    with pytest.raises(UnsupportedUtility):
        validity_tau_star(RepAgent("crra", 5.0, annual))


def test_gateaux_residual_second_order():
    r = [abs(gateaux_residual(BS, 0.1, lam)) for lam in (0.5, 0.25, 0.125)]
    assert r[0] / r[1] == pytest.approx(4.0, rel=0.2)
    assert r[1] / r[2] == pytest.approx(4.0, rel=0.1)
