"""Fairness-constrained classification of functional data.

Group-wise Gaussian-process discriminant scores with post-hoc threshold
calibration to a disparity budget, population oracles for validation, and a
replicated Monte Carlo evaluation harness.
"""

__version__ = "0.1.0"

from .classifier import FitConfig, FittedFairClassifier, fit, predict, select_truncation_cv, split_halves
from .fairness import (
    CalibrationScores,
    DisparitySpec,
    ThresholdSolution,
    bilinear_coefficients,
    candidate_thresholds,
    dkw_calibration_constant,
    empirical_disparity,
    solve_tau,
)
from .fnspace import Dataset, FunctionSample, Grid, LabeledSample, l2_inner, l2_norm, uniform_grid
from .fpca import (
    EigenSystem,
    GroupModel,
    ScoreFunctional,
    eigendecompose,
    estimate_means,
    estimate_pooled_covariance,
    estimate_priors,
    log_density_ratio,
    project_mean_coeffs,
)
from .oracle import (
    OracleClassifier,
    PopulationModel,
    oracle_disparity,
    oracle_misclassification,
    oracle_predict,
    oracle_tau,
    rkhs_norm_sq,
)
from .simgen import ScenarioConfig, generate, preset

__all__ = [
    "CalibrationScores",
    "Dataset",
    "DisparitySpec",
    "EigenSystem",
    "FitConfig",
    "FittedFairClassifier",
    "FunctionSample",
    "Grid",
    "GroupModel",
    "LabeledSample",
    "OracleClassifier",
    "PopulationModel",
    "ScenarioConfig",
    "ScoreFunctional",
    "ThresholdSolution",
    "bilinear_coefficients",
    "candidate_thresholds",
    "dkw_calibration_constant",
    "eigendecompose",
    "empirical_disparity",
    "estimate_means",
    "estimate_pooled_covariance",
    "estimate_priors",
    "fit",
    "generate",
    "l2_inner",
    "l2_norm",
    "log_density_ratio",
    "oracle_disparity",
    "oracle_misclassification",
    "oracle_predict",
    "oracle_tau",
    "predict",
    "preset",
    "project_mean_coeffs",
    "rkhs_norm_sq",
    "select_truncation_cv",
    "solve_tau",
    "split_halves",
    "uniform_grid",
]
