"""Command-line entry point: ``localbound <command> [options]``.

Settings come from an optional TOML file (``--config``) with flags taking
precedence.  Every JSON output carries ``schema_version``.  Errors are
written to stderr as one JSON object; exit code 2 flags bad input and 3 a
numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import sys
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import bounds as _bounds
from . import marketdata as md
from . import models as _models
from . import qr as _qr
from . import riskadjust as _ra
from ._validation import check_taus
from .bootstrap import ResamplePlan, default_block_length
from .exceptions import ConfigError, InputError, LocalBoundError, NumericalError
from .rnd import DistributionEstimate, GridSpec, fit_rn_distribution, interpolate_maturity

log = logging.getLogger("localbound")

SCHEMA_VERSION = 1
STOCHASTIC = {"qr", "bounds", "simulate"}
DEFAULT_TAUS = (0.05, 0.1, 0.2, 0.5, 0.8, 0.9, 0.95)


@dataclass
class RunConfig:
    command: str
    out: Path = Path(".")
    horizon_days: int = 30
    taus: tuple = DEFAULT_TAUS
    seed: int | None = None
    jobs: int = 1
    options: Path | None = None
    index: Path | None = None
    rnq: Path | None = None
    dist: Path | None = None
    extra: Path | None = None
    n_boot: int = 1000
    block_length: int | None = None
    initial_window: int = 500
    oos_window: int | None = None
    tau_star: float = 0.046
    epsilon: float = 0.01
    alt_kind: str | None = None
    alt_param: float | None = None
    model: dict = field(default_factory=dict)
    kind: str = "bs_timevarying"
    n_periods: int = 1000
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.taus = tuple(float(t) for t in check_taus(sorted(set(float(t) for t in self.taus))))
        if int(self.horizon_days) != self.horizon_days or self.horizon_days < 1:
            raise InputError("horizon must be a positive number of days")
        self.horizon_days = int(self.horizon_days)
        self.out = Path(self.out)
        for name in ("options", "index", "rnq", "dist", "extra"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, Path(v))
        if self.command in STOCHASTIC and self.seed is None:
            raise InputError(f"{self.command} is stochastic; a --seed is required")

    @property
    def oos(self) -> int:
        return self.oos_window if self.oos_window is not None else 10 * self.horizon_days

    def need(self, name: str, default_name: str | None = None) -> Path:
        path = getattr(self, name)
        if path is None and default_name is not None:
            path = self.out / default_name
        if path is None:
            raise InputError(f"--{name.replace('_', '-')} is required for {self.command}")
        if not Path(path).exists():
            raise InputError(f"{path}: file not found")
        return Path(path)


# ----------------------------------------------------------------------------
# output helpers


def _write_json(path: Path, payload: dict) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (_dt.date, Path)):
        return str(x)
    return x


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(x) -> str:
    return repr(float(x))


def _summary(**kw) -> None:
    print(json.dumps(_jsonable(kw), sort_keys=True))


def _load_dists(path: Path) -> tuple[int, list[DistributionEstimate]]:
    try:
        doc = json.loads(path.read_text())
        dists = [DistributionEstimate.from_dict(d) for d in doc["distributions"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: not a distribution file ({exc})") from None
    return doc.get("horizon_days"), dists


# ----------------------------------------------------------------------------
# rnd-extract


def _fit_date(date, chains, horizon, grid):
    """Fit every maturity on one date and return the horizon-matched law or a drop reason."""
    fitted, reasons = [], []
    for ch in chains:
        try:
            fitted.append(fit_rn_distribution(ch, grid))
        except LocalBoundError as exc:
            reasons.append(f"{ch.maturity_days}d: {exc}")
    exact = [d for d in fitted if d.horizon_days == horizon]
    if exact:
        return exact[0], None
    below = [d for d in fitted if d.horizon_days < horizon]
    above = [d for d in fitted if d.horizon_days > horizon]
    if not below or not above:
        why = f"no fitted maturities bracket {horizon}d"
        return None, "; ".join([why] + reasons)
    a = max(below, key=lambda d: d.horizon_days)
    b = min(above, key=lambda d: d.horizon_days)
    try:
        return interpolate_maturity(a, b, horizon), None
    except LocalBoundError as exc:
        return None, str(exc)


def cmd_rnd_extract(cfg: RunConfig) -> int:
    raw = md.read_options_csv(cfg.need("options"))
    dropped_groups: list = []
    chains = md.clean_quotes(raw, dropped=dropped_groups)
    by_date = defaultdict(list)
    for ch in chains:
        by_date[ch.observation_date].append(ch)
    all_dates = sorted({q.observation_date for q in raw})
    grid = GridSpec()
    work = [(d, by_date.get(d, [])) for d in all_dates]
    if cfg.jobs == 1:
        results = [_fit_date(d, c, cfg.horizon_days, grid) for d, c in work]
    else:
        results = Parallel(n_jobs=cfg.jobs)(delayed(_fit_date)(d, c, cfg.horizon_days, grid) for d, c in work)

    dists, dropped = [], []
    for (date, _), (dist, why) in zip(work, results):
        if dist is None:
            dropped.append({"date": date, "reason": why})
        else:
            dists.append(dist)
    rows = []
    for d in dists:
        q = d.quantile(cfg.taus)
        f = d.pdf_at(q)
        for t, qi, fi in zip(cfg.taus, q, f):
            rows.append([d.date.isoformat(), cfg.horizon_days, _num(t), _num(qi), _num(fi)])
    cfg.out.mkdir(parents=True, exist_ok=True)
    _write_csv(cfg.out / "rnq.csv", ("date", "horizon", "tau", "quantile", "pdf_at_quantile"), rows)
    _write_json(
        cfg.out / "dist.json",
        {
            "horizon_days": cfg.horizon_days,
            "distributions": [d.to_dict() for d in dists],
            "dropped": dropped,
            "dropped_groups": [{"date": a, "expiry": b, "reason": r} for a, b, r in dropped_groups],
        },
    )
    _summary(command="rnd-extract", fitted=len(dists), dropped=len(dropped), dates=len(all_dates))
    if not dists:
        raise InputError("no date produced a risk-neutral distribution")
    return 0


# ----------------------------------------------------------------------------
# qr


def _read_rnq(path: Path, horizon: int) -> dict:
    """tau -> {date: quantile}."""
    out: dict = defaultdict(dict)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"date", "horizon", "tau", "quantile"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise md.MalformedRow(str(path), 1, f"expected columns {sorted(need)}")
        for row in reader:
            try:
                h = int(float(row["horizon"]))
                if h != horizon:
                    continue
                out[round(float(row["tau"]), 10)][_dt.date.fromisoformat(row["date"])] = float(row["quantile"])
            except ValueError as exc:
                raise md.MalformedRow(str(path), reader.line_num, str(exc)) from None
    if not out:
        raise InputError(f"{path}: no rows for horizon {horizon}")
    return out


def _read_extra(path: Path) -> tuple[list[str], dict]:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if not head or head[0].strip() != "date" or len(head) < 2:
            raise md.MalformedRow(str(path), 1, "expected header date,<name>,...")
        vals = {}
        for row in reader:
            try:
                vals[_dt.date.fromisoformat(row[0])] = [float(v) for v in row[1:]]
            except (ValueError, IndexError) as exc:
                raise md.MalformedRow(str(path), reader.line_num, str(exc)) from None
    return [h.strip() for h in head[1:]], vals


def _fit_record(y, Z, tau, plan, jobs, restriction=None):
    design = _qr.QRDesign(y, Z, tau)
    fit = _qr.fit_with_bootstrap(design, plan, restriction, n_jobs=jobs)
    return fit


def cmd_qr(cfg: RunConfig) -> int:
    rnq = _read_rnq(cfg.need("rnq", "rnq.csv"), cfg.horizon_days)
    levels = md.read_index_csv(cfg.need("index"))
    returns = md.build_returns(levels, cfg.horizon_days, overlapping=True)
    extra_names, extra = ([], {})
    if cfg.extra is not None:
        extra_names, extra = _read_extra(cfg.need("extra"))
    L = cfg.block_length or default_block_length(cfg.horizon_days)
    plan = ResamplePlan("moving_block", L, cfg.n_boot, cfg.seed)
    records, fitted_curves = [], {}
    for tau in cfg.taus:
        qmap = rnq.get(round(tau, 10))
        if qmap is None:
            raise InputError(f"tau={tau} not present in the quantile file")
        keep = [i for i, d in enumerate(returns.dates) if d in qmap and (not extra_names or d in extra)]
        if len(keep) < 10:
            raise md.InsufficientData(f"only {len(keep)} dates with both returns and quantiles at tau={tau}")
        dates = [returns.dates[i] for i in keep]
        y = returns.values[keep]
        q = np.array([qmap[d] for d in dates])
        Z = q[:, None] if not extra_names else np.column_stack([q, [extra[d] for d in dates]])
        p = Z.shape[1] + 1
        restriction = (np.eye(2, p), np.array([0.0, 1.0]))
        fit = _fit_record(y, Z, tau, plan, cfg.jobs, restriction)
        rec = fit.to_dict()
        rec["hit"] = _qr.hit_statistic(y, q, tau)
        rec["regressors"] = ["intercept", "rn_quantile", *extra_names]
        try:
            fc = _qr.expanding_forecast(y, q, cfg.initial_window, tau, extra_regressors=Z[:, 1:] if extra_names else None)
            rec["r1_oos"] = _qr.r1_oos(y, fc, cfg.oos, tau)
        except (InputError, NumericalError) as exc:
            log.warning("r1_oos unavailable at tau=%s: %s", tau, exc)
            rec["r1_oos"] = None
        records.append(rec)
        fitted_curves[tau] = dict(zip(dates, fit.predict(Z)))
    common = sorted(set.intersection(*(set(c) for c in fitted_curves.values())))
    curves = np.array([[fitted_curves[t][d] for t in cfg.taus] for d in common]) if common else np.empty((0, 1))
    cross = _qr.crossing_rate(curves) if curves.size else 0.0
    cfg.out.mkdir(parents=True, exist_ok=True)
    _write_json(
        cfg.out / "qrfit.json",
        {"horizon_days": cfg.horizon_days, "fits": records, "bootstrap": plan.to_dict(), "crossing_rate": cross,
         "oos_window": cfg.oos, "initial_window": cfg.initial_window},
    )
    _summary(command="qr", taus=len(records), crossing_rate=cross)
    return 0


# ----------------------------------------------------------------------------
# bounds


def cmd_bounds(cfg: RunConfig) -> int:
    _, dists = _load_dists(cfg.need("dist", "dist.json"))
    levels = md.read_index_csv(cfg.need("index"))
    returns = md.build_returns(levels, cfg.horizon_days, overlapping=False)
    by_date = {d.date: d for d in dists if d.horizon_days == cfg.horizon_days}
    keep = [i for i, d in enumerate(returns.dates) if d in by_date]
    if len(keep) < 30:
        raise md.InsufficientData(f"{len(keep)} non-overlapping returns with a matching distribution; need 30")
    sample = md.ReturnSeries(tuple(returns.dates[i] for i in keep), cfg.horizon_days, returns.values[keep], False)
    rn = [by_date[d] for d in sample.dates]
    from .rnd import unconditional_rn_cdf

    uncond = unconditional_rn_cdf(rn)
    rf = float(np.mean([d.rf for d in rn]))
    taus = np.round(np.arange(1, 1000) / 1000.0, 3)
    qcurve = uncond.quantile_curve(taus)
    phys = _bounds.kernel_cdf(sample)
    curve = _bounds.odc(phys, qcurve)
    local = _bounds.local_bound(curve, rf, cfg.epsilon)
    hj = _bounds.hj_bound(sample.values.mean(), sample.values.std(ddof=1), rf)
    header = ["tau", "phi", "local_bound", "hj_bound"]
    alt = None
    if cfg.alt_kind is not None:
        alt = _bounds.alt_bounds(curve, qcurve, rf, cfg.alt_kind, cfg.alt_param, cfg.epsilon)
        header += ["alt_kind", "alt_value"]
    alt_map = {} if alt is None else dict(zip(np.round(alt.taus, 6), alt.values))
    rows = []
    for t, p, v in zip(local.taus, local.phi, local.values):
        row = [_num(t), _num(p), _num(v), _num(hj)]
        if alt is not None:
            a = alt_map.get(round(float(t), 6))
            row += [cfg.alt_kind, "" if a is None else _num(a)]
        rows.append(row)
    dom = _bounds.dominance_test(
        sample, rn, cfg.tau_star, None, cfg.n_boot, cfg.seed, cfg.block_length or 12, cfg.epsilon, n_jobs=cfg.jobs
    )
    cfg.out.mkdir(parents=True, exist_ok=True)
    _write_csv(cfg.out / "bounds.csv", header, rows)
    _write_json(cfg.out / "dominance.json", {**dom.to_dict(), "n_obs": len(sample), "horizon_days": cfg.horizon_days})
    _summary(command="bounds", n_obs=len(sample), peak_tau=local.argmax, hj=hj, T_stat=dom.T_stat, p_value=dom.p_value)
    return 0


# ----------------------------------------------------------------------------
# riskadjust


def cmd_riskadjust(cfg: RunConfig) -> int:
    _, dists = _load_dists(cfg.need("dist", "dist.json"))
    dists = [d for d in dists if d.horizon_days == cfg.horizon_days]
    if not dists:
        raise InputError(f"no distributions with horizon {cfg.horizon_days}")
    taus = [t for t in cfg.taus if t <= 0.5]
    if not taus:
        raise InputError("risk adjustment needs at least one tau in (0, 0.5]")
    results = [_ra.risk_adjustment(d, t) for d in dists for t in taus]
    q_hat = np.array([r.q_hat for r in results]).reshape(len(dists), len(taus))
    crossings = int(np.sum(np.any(np.diff(q_hat, axis=1) < 0, axis=1))) if len(taus) > 1 else 0
    cfg.out.mkdir(parents=True, exist_ok=True)
    _write_csv(cfg.out / "ra.csv", _ra.RA_HEADER, [r.to_row() for r in results])
    n_neg = sum(r.lb_negative for r in results)
    summary = {"command": "riskadjust", "rows": len(results), "lb_negative": n_neg,
               "crossing_rate": crossings / len(dists)}
    if cfg.index is not None:
        if cfg.seed is None:
            raise InputError("the excess-quantile regression bootstraps; a --seed is required")
        levels = md.read_index_csv(cfg.need("index"))
        returns = md.build_returns(levels, cfg.horizon_days, overlapping=True)
        rmap = returns.as_mapping()
        plan = ResamplePlan("moving_block", cfg.block_length or default_block_length(cfg.horizon_days), cfg.n_boot, cfg.seed)
        records = []
        for j, t in enumerate(taus):
            sel = [(r, rmap[r.date]) for r in results[j :: len(taus)] if r.date in rmap]
            if len(sel) < 10:
                raise md.InsufficientData(f"only {len(sel)} dates with realised returns at tau={t}")
            y = np.array([R - r.q_tilde for r, R in sel])
            Z = np.array([r.ra for r, _ in sel])
            fit = _fit_record(y, Z, t, plan, cfg.jobs)
            rec = fit.to_dict()
            rec["regressors"] = ["intercept", "ra"]
            records.append(rec)
        _write_json(
            cfg.out / "qrfit_ra.json",
            {"horizon_days": cfg.horizon_days, "response": "R - q_tilde", "fits": records,
             "bootstrap": plan.to_dict(), "first_order_approx": True},
        )
    _summary(**summary)
    return 0


# ----------------------------------------------------------------------------
# model


def _model_from_cfg(cfg: RunConfig):
    if not cfg.model:
        return _models.default_disaster()
    return _models.model_from_dict(cfg.model)


def cmd_model(cfg: RunConfig) -> int:
    model = _model_from_cfg(cfg)
    taus = np.round(np.arange(1, 1000) / 1000.0, 3)
    mb = _models.model_local_and_hj(model, taus, 0.0)
    q_rn = model.quantile(mb.local.taus, "risk_neutral")
    rows = [
        [_num(t), _num(q), _num(p), _num(v), _num(mb.hj)]
        for t, q, p, v in zip(mb.local.taus, q_rn, mb.local.phi, mb.local.values)
    ]
    extra = {}
    if isinstance(model, _models.Lognormal):
        extra["efficiency_closed_form"] = _models.lognormal_efficiency(model)
        extra["efficiency_scan"] = _models.efficiency_scan(model)
    cfg.out.mkdir(parents=True, exist_ok=True)
    _write_csv(cfg.out / "model_bounds.csv", ("tau", "q_rn", "phi", "local_bound", "hj_bound"), rows)
    payload = {
        "model": model.to_dict(),
        "peak_tau": mb.peak_tau,
        "hj_bound": mb.hj,
        "sdf_vol": mb.sdf_vol,
        "local_exceeds_hj": bool(np.any(mb.local_exceeds_hj())),
        **extra,
    }
    _write_json(cfg.out / "model_summary.json", payload)
    _summary(command="model", kind=model.kind, peak_tau=mb.peak_tau, hj_bound=mb.hj, **extra)
    return 0


# ----------------------------------------------------------------------------
# simulate


def _simulate_market(cfg: RunConfig) -> None:
    """Daily index path with mean-reverting log volatility and Black-Scholes quotes at the current vol.

    Two maturities bracket the horizon so extraction exercises the interpolation.
    """
    p = cfg.params
    sigma, r, mu = p.get("sigma", 0.2), p.get("r", 0.02), p.get("mu", 0.08)
    vol_of_vol, persistence = p.get("vol_of_vol", 0.08), p.get("persistence", 0.98)
    rng = np.random.default_rng(cfg.seed)
    start = _dt.date(2010, 1, 4)
    span = int(cfg.n_periods * 7 / 5) + cfg.horizon_days + 20
    cal = [start + _dt.timedelta(days=k) for k in range(span + 1)]
    x = np.zeros(span + 1)
    shocks = rng.standard_normal((2, span))
    for k in range(span):
        x[k + 1] = persistence * x[k] + vol_of_vol * shocks[0, k]
    vol = sigma * np.exp(x - 0.5 * vol_of_vol**2 / (1 - persistence**2))
    dt = 1.0 / 365.0
    steps = (mu - 0.5 * vol[:-1] ** 2) * dt + vol[:-1] * math.sqrt(dt) * shocks[1]
    level = 100.0 * np.exp(np.concatenate([[0.0], np.cumsum(steps)]))
    index = {c: float(v) for c, v in zip(cal, level) if c.weekday() < 5}
    vol_on = dict(zip(cal, vol))
    dates = sorted(index)[: cfg.n_periods]
    h = cfg.horizon_days
    mats = sorted({max(7, h - 4), h + 10})
    quotes = []
    for dd in dates:
        S = index[dd]
        strikes = np.round(S * np.linspace(0.5, 1.6, 56), 2)
        for m in mats:
            quotes.extend(_models.bs_option_quotes(dd, S, float(vol_on[dd]), r, m, strikes))
    md.write_options_csv(cfg.out / "options.csv", quotes)
    md.write_index_csv(cfg.out / "index.csv", index)


def cmd_simulate(cfg: RunConfig) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    if cfg.kind == "bs_market":
        _simulate_market(cfg)
        _summary(command="simulate", kind=cfg.kind, dates=cfg.n_periods)
        return 0
    params = dict(cfg.params)
    if cfg.kind in ("disaster", "pareto") and cfg.model:
        params["model"] = _models.model_from_dict(cfg.model)
    if cfg.kind in ("bs_timevarying", "bs_fixed") and "horizon_days" not in params:
        params["horizon_days"] = cfg.horizon_days
    panel = _models.simulate_dgp(cfg.kind, params, cfg.n_periods, cfg.seed)
    taus = [t for t in cfg.taus]
    qrn = {t: panel.rn_quantiles(t) for t in taus}
    qph = {t: panel.quantiles(t) for t in taus}
    rf = panel.rf()
    header = ["date", "R", "rf"] + [f"q_rn_{t:g}" for t in taus] + [f"q_{t:g}" for t in taus]
    if panel.sigma is not None:
        header += ["mu", "r", "sigma"]
    rows = []
    for i, d in enumerate(panel.returns.dates):
        row = [d.isoformat(), _num(panel.returns.values[i]), _num(rf[i])]
        row += [_num(qrn[t][i]) for t in taus] + [_num(qph[t][i]) for t in taus]
        if panel.sigma is not None:
            row += [_num(panel.mu[i]), _num(panel.r[i]), _num(panel.sigma[i])]
        rows.append(row)
    _write_csv(cfg.out / "simulated.csv", header, rows)
    _write_json(cfg.out / "simulated.json", {"kind": cfg.kind, "seed": cfg.seed, "n_periods": cfg.n_periods,
                                             "horizon_days": panel.returns.horizon_days, "taus": taus})
    _summary(command="simulate", kind=cfg.kind, periods=len(panel))
    return 0


HANDLERS = {
    "rnd-extract": cmd_rnd_extract,
    "qr": cmd_qr,
    "bounds": cmd_bounds,
    "riskadjust": cmd_riskadjust,
    "model": cmd_model,
    "simulate": cmd_simulate,
}


# ----------------------------------------------------------------------------
# parsing


def _taus_arg(s: str) -> tuple:
    try:
        return tuple(float(x) for x in s.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad tau list {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--config", type=Path, help="TOML file; flags override its values")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", type=Path, help="output directory")
    g.add_argument("--horizon", type=int, dest="horizon_days", help="horizon in calendar days")
    g.add_argument("--taus", type=_taus_arg, help="comma-separated quantile levels")
    g.add_argument("--jobs", type=int, help="worker processes (default 1)")
    g.add_argument("-v", "--verbose", action="store_true", default=None)

    parser = argparse.ArgumentParser(prog="localbound", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rnd-extract", parents=[common], help="fit risk-neutral distributions from option quotes")
    p.add_argument("--options", type=Path)

    p = sub.add_parser("qr", parents=[common], help="quantile regressions of returns on risk-neutral quantiles")
    p.add_argument("--rnq", type=Path)
    p.add_argument("--index", type=Path)
    p.add_argument("--extra", type=Path, help="CSV date,<name>,... of extra regressors")
    p.add_argument("--n-boot", type=int)
    p.add_argument("--block-length", type=int)
    p.add_argument("--initial-window", type=int)
    p.add_argument("--oos-window", type=int)

    p = sub.add_parser("bounds", parents=[common], help="local and HJ bounds plus the dominance test")
    p.add_argument("--dist", type=Path)
    p.add_argument("--index", type=Path)
    p.add_argument("--tau-star", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--n-boot", type=int)
    p.add_argument("--block-length", type=int)
    p.add_argument("--alt-kind", choices=["snow", "log_entropy", "liu"])
    p.add_argument("--alt-param", type=float)

    p = sub.add_parser("riskadjust", parents=[common], help="lower bound, risk adjustment and predicted quantiles")
    p.add_argument("--dist", type=Path)
    p.add_argument("--index", type=Path, help="also run the excess-quantile regression")
    p.add_argument("--n-boot", type=int)
    p.add_argument("--block-length", type=int)

    p = sub.add_parser("model", parents=[common], help="bounds implied by an analytic model")
    p.add_argument("--variant", help="model kind; parameters come from [model] in --config")

    p = sub.add_parser("simulate", parents=[common], help="simulate a data-generating process")
    p.add_argument("--kind", choices=["bs_timevarying", "bs_fixed", "disaster", "pareto", "bs_market"])
    p.add_argument("--n-periods", type=int)
    return parser


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for k, v in doc.items():
        key = k.replace("-", "_")
        out["horizon_days" if key == "horizon" else key] = v
    return out


def make_config(args: argparse.Namespace) -> RunConfig:
    values = _load_config(args.config)
    cmd_section = values.pop(args.command.replace("-", "_"), None)
    if isinstance(cmd_section, dict):
        values.update({k.replace("-", "_"): v for k, v in cmd_section.items()})
    for k, v in vars(args).items():
        if k in ("config", "command", "verbose", "variant") or v is None:
            continue
        values[k] = v
    if getattr(args, "variant", None):
        model = dict(values.get("model", {}))
        model["kind"] = args.variant
        values["model"] = model
    for k in [k for k in values if k not in RunConfig.__dataclass_fields__]:
        if isinstance(values[k], dict):
            values.pop(k)
        else:
            raise ConfigError(f"unknown setting {k!r}")
    try:
        return RunConfig(command=args.command, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        return HANDLERS[cfg.command](cfg)
    except InputError as exc:
        return _fail(exc, 2)
    except NumericalError as exc:
        return _fail(exc, 3)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(exc, 3)
    except OSError as exc:
        return _fail(exc, 2)


def _fail(exc: Exception, code: int) -> int:
    err = {"schema_version": SCHEMA_VERSION, "error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(err, sort_keys=True), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
