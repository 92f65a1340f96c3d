import datetime as dt
import math

import numpy as np
import pytest

from localbound._black import black_price
from localbound.marketdata import RawOptionQuote

ACCEPTANCE_LINES: list[str] = []

OBS_DATE = dt.date(2020, 1, 2)


def bs_quotes(sigma, days, r=0.0, n=41, lo=0.6, hi=1.4, S=100.0, date=OBS_DATE, both=True):
    """Exact Black-Scholes quotes (bid = ask) on an evenly spaced strike ladder."""
    T = days / 365.0
    Rf = math.exp(r * T)
    F = S * Rf
    expiry = date + dt.timedelta(days=days)
    out = []
    for k in np.linspace(lo * S, hi * S, n):
        for is_call in (True, False) if both else ((k >= F),):
            p = float(black_price(F, k, sigma, T, 1.0 / Rf, is_call))
            if p > 0:
                out.append(RawOptionQuote(date, expiry, float(k), "C" if is_call else "P", p, p, S, Rf, F))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
