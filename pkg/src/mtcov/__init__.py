"""Noise covariance estimation in multi-task high-dimensional linear models.

Fit a multi-task elastic-net, compute its interaction matrix, and debias the
residual covariance. Naive, method-of-moments and oracle baselines and a
Monte-Carlo harness are included.
"""

from .data import CovarianceEstimate, Dataset, Method, PenaltyPair, Truth, load_matrix_csv, save_matrix_csv, validate_dataset
from .estimators import (
    estimate_gen_error, estimate_mm, estimate_naive, estimate_oos_error, estimate_oracle, estimate_proposed,
)
from .interaction import InteractionResult, interaction_matrix
from .solver import CvTable, FitResult, cross_validate, fit, fit_cv, kkt_violation

__all__ = [
    "CovarianceEstimate", "CvTable", "Dataset", "FitResult", "InteractionResult", "Method", "PenaltyPair", "Truth",
    "cross_validate", "estimate_gen_error", "estimate_mm", "estimate_naive", "estimate_oos_error",
    "estimate_oracle", "estimate_proposed", "fit", "fit_cv", "interaction_matrix", "kkt_violation",
    "load_matrix_csv", "save_matrix_csv", "validate_dataset",
]
