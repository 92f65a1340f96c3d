from __future__ import annotations

import numpy as np

from .exceptions import InputError

DEFAULT_TAUS = np.round(np.arange(1, 1000) / 1000.0, 3)


def as_float_array(x, name: str, ndim: int = 1) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if ndim == 1:
        arr = np.atleast_1d(arr)
    if arr.ndim != ndim:
        raise InputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return arr


def check_tau(tau: float, name: str = "tau", lo: float = 0.0, hi: float = 1.0) -> float:
    tau = float(tau)
    if not (lo < tau < hi):
        raise InputError(f"{name}={tau} must lie in ({lo}, {hi})")
    return tau


def check_taus(taus) -> np.ndarray:
    taus = as_float_array(taus, "taus")
    if taus.size == 0:
        raise InputError("taus is empty")
    if np.any(taus <= 0) or np.any(taus >= 1):
        raise InputError("taus must lie strictly inside (0, 1)")
    if np.any(np.diff(taus) <= 0):
        raise InputError("taus must be strictly increasing")
    return taus


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise InputError(f"{name} must be positive and finite, got {value}")
    return value


def pinball(residuals: np.ndarray, tau: float) -> np.ndarray:
    """Check loss rho_tau(u) = u * (tau - 1{u < 0})."""
    r = np.asarray(residuals, dtype=float)
    return r * (tau - (r < 0))
