"""Option-quote ingestion and cleaning, index levels and N-day returns."""

from __future__ import annotations

import bisect
import csv
import datetime as _dt
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import EmptyAfterCleaning, InputError, InsufficientData, MalformedRow

log = logging.getLogger(__name__)

OPTIONS_HEADER = ("date", "expiry", "strike", "flag", "bid", "ask", "underlying", "forward", "rf")
INDEX_HEADER = ("date", "level")
ALIGN_WINDOW_DAYS = 3


@dataclass(frozen=True)
class RawOptionQuote:
    observation_date: _dt.date
    expiry_date: _dt.date
    strike: float
    flag: str
    bid: float
    ask: float
    underlying: float
    risk_free_gross: float
    forward: float | None = None

    def __post_init__(self):
        if self.flag not in ("P", "C"):
            raise InputError(f"flag must be P or C, got {self.flag!r}")
        if not (self.ask >= self.bid >= 0):
            raise InputError(f"need ask >= bid >= 0 (bid={self.bid}, ask={self.ask})")
        if self.expiry_date <= self.observation_date:
            raise InputError("expiry must be after the observation date")
        if self.underlying <= 0 or self.strike <= 0 or self.risk_free_gross <= 0:
            raise InputError("underlying, strike and rf must be positive")
        if self.forward is not None and self.forward <= 0:
            raise InputError("forward must be positive")

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)

    @property
    def maturity_days(self) -> int:
        return (self.expiry_date - self.observation_date).days

    @property
    def forward_or_carry(self) -> float:
        return self.forward if self.forward is not None else self.underlying * self.risk_free_gross


@dataclass(frozen=True)
class Quote:
    """A cleaned quote; ``converted`` marks prices obtained through put-call parity."""

    strike: float
    flag: str
    bid: float
    ask: float
    converted: bool = False

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)

    @property
    def spread(self) -> float:
        return self.ask - self.bid


@dataclass(frozen=True)
class OptionChain:
    observation_date: _dt.date
    expiry_date: _dt.date
    quotes: tuple
    underlying: float
    forward: float
    risk_free_gross: float

    @property
    def maturity_days(self) -> int:
        return (self.expiry_date - self.observation_date).days

    @property
    def strikes(self) -> np.ndarray:
        return np.array([q.strike for q in self.quotes])

    def to_raw(self) -> list[RawOptionQuote]:
        return [
            RawOptionQuote(
                self.observation_date, self.expiry_date, q.strike, q.flag, q.bid, q.ask,
                self.underlying, self.risk_free_gross, self.forward,
            )
            for q in self.quotes
        ]


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    dates: tuple
    horizon_days: int
    values: np.ndarray
    overlapping: bool = True

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        dates = tuple(self.dates)
        if values.ndim != 1 or values.size != len(dates):
            raise InputError("one value per date required")
        if np.any(~np.isfinite(values)) or np.any(values <= 0):
            raise InputError("gross returns must be finite and strictly positive")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise InputError("dates must be strictly increasing")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", dates)

    def __len__(self) -> int:
        return self.values.size

    def as_mapping(self) -> dict:
        return dict(zip(self.dates, self.values.tolist()))

    def take(self, idx) -> np.ndarray:
        return self.values[np.asarray(idx)]


# ----------------------------------------------------------------------------
# parity


def call_to_put(call, forward, strike, rf):
    """P = C - (F - K) / R_f."""
    return np.asarray(call) - (np.asarray(forward) - np.asarray(strike)) / np.asarray(rf)


def put_to_call(put, forward, strike, rf):
    return np.asarray(put) + (np.asarray(forward) - np.asarray(strike)) / np.asarray(rf)


def _within_bounds(flag: str, price: float, strike: float, forward: float, rf: float) -> bool:
    # Bounds on the forward; with F = S R_f they reduce to the spot versions.
    tol = 1e-12 * max(strike, forward)
    if flag == "P":
        return max(0.0, (strike - forward) / rf) - tol <= price <= strike / rf + tol
    return max(0.0, (forward - strike) / rf) - tol <= price <= forward / rf + tol


def _otm_quote(q: RawOptionQuote, forward: float, rf: float) -> Quote | None:
    """Express a raw quote on the out-of-the-money side of the forward."""
    otm_flag = "P" if q.strike < forward else "C"
    if q.flag == otm_flag:
        return Quote(q.strike, q.flag, q.bid, q.ask)
    conv = call_to_put if q.flag == "C" else put_to_call
    bid, ask = float(conv(q.bid, forward, q.strike, rf)), float(conv(q.ask, forward, q.strike, rf))
    if bid <= 0:
        return None
    return Quote(q.strike, otm_flag, bid, ask, converted=True)


def clean_quotes(
    raw: Sequence[RawOptionQuote],
    min_maturity_days: int = 7,
    max_maturity_days: int = 500,
    dropped: list | None = None,
) -> list[OptionChain]:
    """Group quotes by (date, expiry) and apply the cleaning filters.

    Groups that lose every quote are logged and appended to ``dropped`` as
    ``(date, expiry, reason)``; only an entirely empty result raises.
    """
    if len(raw) == 0:
        raise InputError("no quotes supplied")
    groups: dict = defaultdict(list)
    for q in raw:
        groups[(q.observation_date, q.expiry_date)].append(q)

    chains = []
    for (date, expiry), quotes in sorted(groups.items()):
        maturity = (expiry - date).days
        if not min_maturity_days <= maturity <= max_maturity_days:
            _drop(dropped, date, expiry, f"maturity {maturity}d outside [{min_maturity_days}, {max_maturity_days}]")
            continue
        S = quotes[0].underlying
        rf = quotes[0].risk_free_gross
        F = float(np.median([q.forward_or_carry for q in quotes]))
        best: dict = {}
        for q in quotes:
            if q.bid <= 0 or not _within_bounds(q.flag, q.mid, q.strike, F, rf):
                continue
            cq = _otm_quote(q, F, rf)
            if cq is None:
                continue
            prev = best.get(cq.strike)
            # Native out-of-the-money quotes win over converted ones, then the tighter spread.
            if prev is None or (cq.converted, cq.spread) < (prev.converted, prev.spread):
                best[cq.strike] = cq
        if not best:
            _drop(dropped, date, expiry, "no quotes survive cleaning")
            continue
        chains.append(OptionChain(date, expiry, tuple(best[k] for k in sorted(best)), S, F, rf))
    if not chains:
        raise EmptyAfterCleaning("every (date, expiry) group was removed by cleaning")
    return chains


def _drop(dropped, date, expiry, reason):
    log.info("dropping chain %s -> %s: %s", date, expiry, reason)
    if dropped is not None:
        dropped.append((date, expiry, reason))


# ----------------------------------------------------------------------------
# returns


def build_returns(levels: Mapping, horizon_days: int, overlapping: bool = True) -> ReturnSeries:
    """Gross N-calendar-day returns.

    The end date is the first trading date in [t+N, t+N+3]; starts without one
    are skipped.  Non-overlapping samples take the first trading date on or
    after the 15th of each month that is at least N days past the previous pick.
    """
    if horizon_days < 1:
        raise InputError("horizon_days must be >= 1")
    items = sorted(levels.items())
    dates = [d for d, _ in items]
    px = np.array([v for _, v in items], dtype=float)
    if np.any(~np.isfinite(px)) or np.any(px <= 0):
        raise InputError("index levels must be positive")

    def end_index(i):
        target = dates[i] + _dt.timedelta(days=horizon_days)
        j = bisect.bisect_left(dates, target)
        if j < len(dates) and (dates[j] - target).days <= ALIGN_WINDOW_DAYS:
            return j
        return None

    if overlapping:
        starts = range(len(dates))
    else:
        starts, last = [], None
        months = sorted({(d.year, d.month) for d in dates})
        for y, m in months:
            floor = _dt.date(y, m, 15)
            if last is not None:
                floor = max(floor, dates[last] + _dt.timedelta(days=horizon_days))
            i = bisect.bisect_left(dates, floor)
            if i < len(dates) and (dates[i].year, dates[i].month) == (y, m):
                starts.append(i)
                last = i

    out_d, out_v = [], []
    for i in starts:
        j = end_index(i)
        if j is not None:
            out_d.append(dates[i])
            out_v.append(px[j] / px[i])
    if not out_d:
        raise InsufficientData(f"no date pair spans {horizon_days} days")
    return ReturnSeries(tuple(out_d), horizon_days, np.array(out_v), overlapping)


# ----------------------------------------------------------------------------
# CSV


def _parse_date(s: str) -> _dt.date:
    return _dt.date.fromisoformat(s.strip())


def _parse_float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"non-finite number {s!r}")
    return v


def _rows(path, header):
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise MalformedRow(str(path), 1, "empty file") from None
        if tuple(h.strip() for h in head) != header:
            raise MalformedRow(str(path), 1, f"expected header {','.join(header)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(str(path), reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, row


def read_options_csv(path) -> list[RawOptionQuote]:
    out = []
    for line, row in _rows(path, OPTIONS_HEADER):
        try:
            date, expiry, strike, flag, bid, ask, und, fwd, rf = row
            out.append(
                RawOptionQuote(
                    _parse_date(date), _parse_date(expiry), _parse_float(strike), flag.strip().upper(),
                    _parse_float(bid), _parse_float(ask), _parse_float(und), _parse_float(rf),
                    _parse_float(fwd) if fwd.strip() else None,
                )
            )
        except (ValueError, InputError) as exc:
            raise MalformedRow(str(path), line, str(exc)) from None
    return out


def read_index_csv(path) -> dict:
    out = {}
    for line, (date, level) in _rows(path, INDEX_HEADER):
        try:
            d, v = _parse_date(date), _parse_float(level)
        except ValueError as exc:
            raise MalformedRow(str(path), line, str(exc)) from None
        if v <= 0:
            raise MalformedRow(str(path), line, "level must be positive")
        if d in out:
            raise MalformedRow(str(path), line, f"duplicate date {d}")
        out[d] = v
    return out


def write_options_csv(path, quotes: Iterable[RawOptionQuote]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OPTIONS_HEADER)
        for q in quotes:
            w.writerow([
                q.observation_date.isoformat(), q.expiry_date.isoformat(), repr(q.strike), q.flag,
                repr(q.bid), repr(q.ask), repr(q.underlying),
                "" if q.forward is None else repr(q.forward), repr(q.risk_free_gross),
            ])


def write_index_csv(path, levels: Mapping) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INDEX_HEADER)
        for d, v in sorted(levels.items()):
            w.writerow([d.isoformat(), repr(float(v))])
