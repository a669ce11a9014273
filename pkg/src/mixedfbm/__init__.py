"""Drift estimation for the mixed fractional Brownian model."""

__version__ = "0.1.0"

from .closed_form import (
    ConstantChain,
    FirstKindReport,
    asymptotic_variance,
    constant_chain,
    h0,
    h0_weighted_integral,
    h_mu,
    limit_functional,
    verify_first_kind,
)
from .errors import AccuracyError, AccuracyWarning, DomainError, IllConditionedError
from .estimator import (
    EstimatorResult,
    log_likelihood,
    mle,
    stochastic_integral_N,
)
from .gaussian_sim import (
    CovarianceModel,
    SamplePath,
    covariance_X,
    covariance_model,
    inverse_transform,
    molchan_transform,
    simulate_X,
    simulate_Y,
    simulate_Z,
    simulate_fbm,
)
from .fredholm import (
    DiscretizedOperator,
    FredholmSolution,
    QuadratureGrid,
    ResidualReport,
    assemble,
    build_grid,
    filter_interpolant,
    quadratic_variation_N,
    residual_report,
    solve_second_kind,
    spectrum_report,
    unscale,
)
from .kernels import KernelContext, KernelTables, get_tables
from .model import DerivedConstants, HurstPair, ModelParams, derive_constants

__all__ = [
    "AccuracyError",
    "AccuracyWarning",
    "DomainError",
    "IllConditionedError",
    "DerivedConstants",
    "HurstPair",
    "ModelParams",
    "derive_constants",
    "KernelContext",
    "KernelTables",
    "get_tables",
    "QuadratureGrid",
    "DiscretizedOperator",
    "FredholmSolution",
    "ResidualReport",
    "build_grid",
    "assemble",
    "solve_second_kind",
    "residual_report",
    "unscale",
    "filter_interpolant",
    "quadratic_variation_N",
    "spectrum_report",
    "SamplePath",
    "CovarianceModel",
    "covariance_X",
    "covariance_model",
    "simulate_X",
    "simulate_Y",
    "simulate_Z",
    "simulate_fbm",
    "molchan_transform",
    "inverse_transform",
    "EstimatorResult",
    "stochastic_integral_N",
    "log_likelihood",
    "mle",
    "ConstantChain",
    "FirstKindReport",
    "constant_chain",
    "h0",
    "verify_first_kind",
    "h0_weighted_integral",
    "asymptotic_variance",
    "h_mu",
    "limit_functional",
    "__version__",
]
