"""Black (1976) prices on the forward and a vectorised implied-vol bisection."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

VOL_LO, VOL_HI = 1e-6, 5.0


def black_price(forward, strike, vol, t, discount, is_call):
    forward, strike, vol = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (forward, strike, vol)))
    sd = vol * np.sqrt(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(forward / strike) + 0.5 * sd * sd) / sd
    d2 = d1 - sd
    call = discount * (forward * ndtr(d1) - strike * ndtr(d2))
    put = discount * (strike * ndtr(-d2) - forward * ndtr(-d1))
    return np.where(is_call, call, put)


def implied_vol(price, forward, strike, t, discount, is_call, tol: float = 1e-8, max_iter: int = 200):
    """Bisection on [VOL_LO, VOL_HI].

    Prices equal to the VOL_LO price up to relative rounding, or marginally
    below it, map to VOL_LO; prices outside the attainable range give NaN.
    """
    price = np.asarray(price, dtype=float)
    strike = np.asarray(strike, dtype=float)
    is_call = np.broadcast_to(np.asarray(is_call, dtype=bool), price.shape)
    p_lo = black_price(forward, strike, VOL_LO, t, discount, is_call)
    p_hi = black_price(forward, strike, VOL_HI, t, discount, is_call)
    slack = 1e-12 * p_lo + 1e-300
    out = np.full(price.shape, np.nan)
    floor = (price <= p_lo + slack) & (price >= p_lo - 1e-9 * np.maximum(forward, strike))
    out[floor] = VOL_LO
    live = (price > p_lo + slack) & (price < p_hi)
    if np.any(live):
        lo = np.full(live.sum(), VOL_LO)
        hi = np.full(live.sum(), VOL_HI)
        pt, k, c = price[live], strike[live], is_call[live]
        f = np.broadcast_to(np.asarray(forward, dtype=float), price.shape)[live]
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            above = black_price(f, k, mid, t, discount, c) > pt
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
            if np.max(hi - lo) < tol:
                break
        out[live] = 0.5 * (lo + hi)
    return out
