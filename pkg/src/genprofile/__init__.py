"""Generalized profiling: ODE parameter estimation with B-spline trial functions."""
from .errors import (
    DataLossError,
    DatasetParseError,
    DegenerateSystemError,
    DivergenceError,
    DomainError,
    FitError,
    InsufficientDataError,
    InvalidGridError,
    InvalidModelError,
    InvalidStartError,
    ProfilingError,
    RankDeficiencyError,
)
from .models import (
    CHAIN2,
    CHAIN3,
    LOGISTIC,
    MODELS,
    NEWTON,
    FullParameterVector,
    ModelSpec,
    exact_chain2,
    exact_logistic,
    exact_newton,
    get_model,
    register_model,
    rhs_chain,
    rhs_logistic,
    rhs_newton,
    rk4_solve,
    solve,
)
from .noise import NoiseModel, log_density, make_rng, sample
from .numerics import Box, OptimizerOptions, least_squares_solve, nelder_mead_max
from .profiling import (
    Dataset,
    FitConfig,
    FitResult,
    GridConfig,
    WeightState,
    data_loss,
    discrepancy,
    fit,
    model_loss,
    optimize_theta_model_only,
    optimize_theta_penalized,
    penalized_loss,
    spline_update,
    stacked_system,
    update_weights,
)
from .splines import (
    CollocationMatrices,
    KnotVector,
    Spline,
    SplineBasis,
    build_knots,
    collocation,
    eval_basis,
    eval_basis_deriv,
    eval_spline,
    eval_spline_deriv,
    interpolate,
    make_basis,
)
from .synthetic import simulate_dataset

__version__ = "0.1.0"

__all__ = [
    "simulate_dataset",
    "NoiseModel",
    "log_density",
    "make_rng",
    "sample",
    "Box",
    "OptimizerOptions",
    "least_squares_solve",
    "nelder_mead_max",
    "DataLossError",
    "DatasetParseError",
    "DegenerateSystemError",
    "DivergenceError",
    "DomainError",
    "FitError",
    "InsufficientDataError",
    "InvalidGridError",
    "InvalidModelError",
    "InvalidStartError",
    "ProfilingError",
    "RankDeficiencyError",
    "CHAIN2",
    "CHAIN3",
    "LOGISTIC",
    "MODELS",
    "NEWTON",
    "FullParameterVector",
    "ModelSpec",
    "exact_chain2",
    "exact_logistic",
    "exact_newton",
    "get_model",
    "register_model",
    "rhs_chain",
    "rhs_logistic",
    "rhs_newton",
    "rk4_solve",
    "solve",
    "Dataset",
    "FitConfig",
    "FitResult",
    "GridConfig",
    "WeightState",
    "data_loss",
    "discrepancy",
    "fit",
    "model_loss",
    "optimize_theta_model_only",
    "optimize_theta_penalized",
    "penalized_loss",
    "spline_update",
    "stacked_system",
    "update_weights",
    "CollocationMatrices",
    "KnotVector",
    "Spline",
    "SplineBasis",
    "build_knots",
    "collocation",
    "eval_basis",
    "eval_basis_deriv",
    "eval_spline",
    "eval_spline_deriv",
    "interpolate",
    "make_basis",
]
