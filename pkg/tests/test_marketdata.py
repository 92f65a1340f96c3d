import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import OBS_DATE, bs_quotes
from localbound.exceptions import EmptyAfterCleaning, InputError, InsufficientData, MalformedRow
from localbound.marketdata import (
    RawOptionQuote,
    build_returns,
    call_to_put,
    clean_quotes,
    put_to_call,
    read_index_csv,
    read_options_csv,
    write_index_csv,
    write_options_csv,
)

EXP = OBS_DATE + dt.timedelta(days=30)


def quote(strike=100.0, flag="P", bid=1.0, ask=1.2, S=100.0, rf=1.0, fwd=None, expiry=EXP):
    return RawOptionQuote(OBS_DATE, expiry, strike, flag, bid, ask, S, rf, fwd)


def test_raw_quote_validation():
    with pytest.raises(InputError):
        quote(bid=2.0, ask=1.0)
    with pytest.raises(InputError):
        quote(flag="X")
    with pytest.raises(InputError):
        quote(expiry=OBS_DATE)


def test_full_bs_chain_survives():
    chains = clean_quotes(bs_quotes(0.2, 30, r=0.0, n=41))
    assert len(chains) == 1
    assert len(chains[0].quotes) == 41


def test_zero_bid_dropped():
    raw = bs_quotes(0.2, 30, n=41, both=False)
    k0 = raw[0].strike
    raw[0] = quote(strike=k0, flag=raw[0].flag, bid=0.0, ask=raw[0].ask, fwd=100.0)
    ch = clean_quotes(raw)[0]
    assert k0 not in ch.strikes


def test_put_above_upper_bound_dropped():
    raw = bs_quotes(0.2, 30, n=11, both=False)
    bad = quote(strike=90.0, flag="P", bid=95.0, ask=96.0, fwd=100.0)
    strikes = clean_quotes(raw + [bad])[0].strikes
    assert np.sum(strikes == 90.0) == 1 or 90.0 not in [q.strike for q in raw]
    ch = clean_quotes([bad] + [q for q in raw if q.strike != 90.0])[0]
    assert 90.0 not in ch.strikes


def test_itm_call_converted_to_put():
    # only a call quote at K < F: it must come back as an out-of-the-money put
    raw = [q for q in bs_quotes(0.2, 30, n=21) if not (q.strike < 100 and q.flag == "P")]
    ch = clean_quotes(raw)[0]
    below = [q for q in ch.quotes if q.strike < 100]
    assert below and all(q.flag == "P" and q.converted for q in below)
    assert all(q.flag == "C" for q in ch.quotes if q.strike > 100)


def test_parity_round_trip():
    c = np.array([3.2, 11.7, 0.05])
    K = np.array([100.0, 90.0, 130.0])
    back = put_to_call(call_to_put(c, 101.0, K, 1.003), 101.0, K, 1.003)
    np.testing.assert_allclose(back, c, rtol=1e-12)


def test_maturity_filter_and_empty():
    raw = bs_quotes(0.2, 5, n=11)
    dropped = []
    with pytest.raises(EmptyAfterCleaning):
        clean_quotes(raw, dropped=dropped)
    with pytest.raises(InputError):
        clean_quotes([])
    mixed = raw + bs_quotes(0.2, 30, n=11)
    chains = clean_quotes(mixed, dropped=dropped)
    assert [c.maturity_days for c in chains] == [30]
    assert dropped and "maturity" in dropped[-1][2]


def test_cleaning_idempotent():
    raw = bs_quotes(0.25, 45, r=0.03, n=31)
    once = clean_quotes(raw)
    twice = clean_quotes([q for c in once for q in c.to_raw()])
    assert [(q.strike, q.flag, q.mid) for q in once[0].quotes] == [(q.strike, q.flag, q.mid) for q in twice[0].quotes]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(50, 150), st.sampled_from("PC"), st.floats(0, 60), st.floats(0, 5)), min_size=1, max_size=30))
def test_cleaned_chains_satisfy_invariants(rows):
    raw = [quote(strike=k, flag=f, bid=b, ask=b + w, fwd=100.0) for k, f, b, w in rows]
    try:
        chains = clean_quotes(raw)
    except EmptyAfterCleaning:
        return
    for ch in chains:
        ks = ch.strikes
        assert np.all(np.diff(ks) > 0)
        for q in ch.quotes:
            assert q.bid > 0
            if q.flag == "P":
                assert max(0.0, q.strike - ch.forward) - 1e-9 <= q.mid <= q.strike + 1e-9
            else:
                assert max(0.0, ch.forward - q.strike) - 1e-9 <= q.mid <= ch.forward + 1e-9


def test_build_returns_basic():
    d0 = dt.date(2021, 1, 4)
    levels = {d0: 100.0, d0 + dt.timedelta(days=30): 110.0}
    rs = build_returns(levels, 30)
    assert rs.values.tolist() == pytest.approx([1.10])
    const = {d0 + dt.timedelta(days=i): 5.0 for i in range(100)}
    assert np.all(build_returns(const, 30).values == 1.0)
    with pytest.raises(InsufficientData):
        build_returns({d0: 1.0, d0 + dt.timedelta(days=1): 1.0}, 30)


def test_build_returns_forward_window():
    d0 = dt.date(2021, 1, 4)
    levels = {d0: 100.0, d0 + dt.timedelta(days=32): 90.0}
    assert build_returns(levels, 30).values[0] == pytest.approx(0.9)
    far = {d0: 100.0, d0 + dt.timedelta(days=35): 90.0}
    with pytest.raises(InsufficientData):
        build_returns(far, 30)


def test_nonoverlapping_mid_month_spacing():
    start = dt.date(2015, 1, 1)
    levels = {start + dt.timedelta(days=i): 100.0 + i for i in range(800) if (start + dt.timedelta(days=i)).weekday() < 5}
    rs = build_returns(levels, 30, overlapping=False)
    gaps = np.diff([d.toordinal() for d in rs.dates])
    assert np.all(gaps >= 30)
    assert all(d.day >= 15 for d in rs.dates)


def test_gbm_drift():
    rng = np.random.default_rng(7)
    mu, sigma, dt_ = 0.08, 0.2, 1 / 365
    n = 100_000
    path = 100 * np.exp(np.cumsum((mu - 0.5 * sigma**2) * dt_ + sigma * np.sqrt(dt_) * rng.standard_normal(n)))
    d0 = dt.date(1800, 1, 1)
    levels = {d0 + dt.timedelta(days=i): v for i, v in enumerate(path)}
    rs = build_returns(levels, 30)
    # overlapping windows: s.e. inflated by about sqrt(30)
    se = sigma * np.sqrt(30 / 365) / np.sqrt(n / 30)
    assert abs(np.log(rs.values).mean() - (mu - 0.5 * sigma**2) * 30 / 365) < 4 * se


def test_csv_round_trip(tmp_path):
    raw = bs_quotes(0.2, 30, n=5)
    write_options_csv(tmp_path / "o.csv", raw)
    assert read_options_csv(tmp_path / "o.csv") == raw
    levels = {dt.date(2020, 1, 2): 1.5, dt.date(2020, 1, 3): 1.25}
    write_index_csv(tmp_path / "i.csv", levels)
    assert read_index_csv(tmp_path / "i.csv") == levels


def test_malformed_rows(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("date,level\n2020-01-02,1.0\n2020-01-03,abc\n")
    with pytest.raises(MalformedRow) as exc:
        read_index_csv(p)
    assert exc.value.line == 3
    p.write_text("date,lvl\n")
    with pytest.raises(MalformedRow):
        read_index_csv(p)
