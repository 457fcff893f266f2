"""Change-in-slope detection by exact L0-penalised continuous piecewise-linear fitting."""

__version__ = "0.1.0"

from .crops import CropsResult, SegmentationRecord, crops_run
from .diagnostics import (
    FittedSegmentRow,
    LogLinearVariance,
    bic_score,
    elbow_table,
    estimate_variance_ddiff,
    fit_loglinear_variance,
    fitted_table,
    select_bic,
)
from .model import (
    CpopError,
    DataSeries,
    Grid,
    InternalError,
    Segmentation,
    SolverConfig,
    ValidationError,
    default_beta,
    evaluate_fit,
    residuals,
    validate,
    weighted_rss,
)
from .simulate import SlopeSpec, mean_function, simulate_series, simulate_y
from .solver import CpopResult, solve

__all__ = [
    "CpopError",
    "CpopResult",
    "CropsResult",
    "DataSeries",
    "FittedSegmentRow",
    "Grid",
    "InternalError",
    "LogLinearVariance",
    "Segmentation",
    "SegmentationRecord",
    "SlopeSpec",
    "SolverConfig",
    "ValidationError",
    "bic_score",
    "crops_run",
    "default_beta",
    "elbow_table",
    "estimate_variance_ddiff",
    "evaluate_fit",
    "fit_loglinear_variance",
    "fitted_table",
    "mean_function",
    "residuals",
    "select_bic",
    "simulate_series",
    "simulate_y",
    "solve",
    "validate",
    "weighted_rss",
]
