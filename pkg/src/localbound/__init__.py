"""Quantile-level SDF volatility bounds and option-implied risk adjustments."""

from .bootstrap import ResamplePlan, qr_boot_cov, resample_indices
from .bounds import (
    ODC,
    BoundCurve,
    KernelCDF,
    alt_bounds,
    dominance_test,
    hj_bound,
    kernel_cdf,
    local_bound,
    odc,
)
from .exceptions import InputError, LocalBoundError, NumericalError
from .marketdata import (
    OptionChain,
    RawOptionQuote,
    ReturnSeries,
    build_returns,
    clean_quotes,
    read_index_csv,
    read_options_csv,
)
from .models import (
    Disaster,
    JointNormal,
    Lognormal,
    Pareto,
    RepAgent,
    UtilityCoeffs,
    load_model,
    model_local_and_hj,
    simulate_dgp,
)
from .qr import QRDesign, QRFit, QuantileRegression, qr_fit, wald_test
from .riskadjust import (
    RiskAdjustment,
    crash_prob_log_utility,
    feasible_lb,
    gateaux_ra,
    quantile_predictor,
    risk_adjustment,
    validity_tau_star,
)
from .rnd import (
    DistributionEstimate,
    GridSpec,
    QuantileCurve,
    fit_rn_distribution,
    interpolate_maturity,
    rn_moment,
    rn_truncated_moment,
)

__version__ = "0.1.0"

__all__ = [
    "BoundCurve",
    "Disaster",
    "DistributionEstimate",
    "GridSpec",
    "InputError",
    "JointNormal",
    "KernelCDF",
    "LocalBoundError",
    "Lognormal",
    "NumericalError",
    "ODC",
    "OptionChain",
    "Pareto",
    "QRDesign",
    "QRFit",
    "QuantileCurve",
    "QuantileRegression",
    "RawOptionQuote",
    "RepAgent",
    "ResamplePlan",
    "ReturnSeries",
    "RiskAdjustment",
    "UtilityCoeffs",
    "alt_bounds",
    "build_returns",
    "clean_quotes",
    "crash_prob_log_utility",
    "dominance_test",
    "feasible_lb",
    "fit_rn_distribution",
    "gateaux_ra",
    "hj_bound",
    "interpolate_maturity",
    "kernel_cdf",
    "load_model",
    "local_bound",
    "model_local_and_hj",
    "odc",
    "qr_boot_cov",
    "qr_fit",
    "quantile_predictor",
    "read_index_csv",
    "read_options_csv",
    "resample_indices",
    "risk_adjustment",
    "rn_moment",
    "rn_truncated_moment",
    "simulate_dgp",
    "validity_tau_star",
    "wald_test",
]
