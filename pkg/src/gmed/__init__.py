"""G-estimation of natural direct and indirect mediation effects in
partially linear models, with bias-reduced (orthogonal) nuisance
estimation, influence-function and bootstrap variances, robust Wald tests,
and constrained-GMM score tests."""

from .data import ColumnMap, Dataset, ModelConfig, load_csv, standardize
from .estimation import (
    BootstrapReport,
    GEstimate,
    bootstrap_variance,
    fit_nuisance_bias_reduced,
    fit_nuisance_ml,
    g_estimate,
    x_bar_oracle,
)
from .estimator import GEstimationMediation, check_mediation_arrays
from .inference import (
    HypothesisSpec,
    TestOutcome,
    chi2_sf,
    gmm_objective,
    ols_sobel_lr,
    robust_sobel,
    robust_wald_direct,
    score_test_cue,
    score_test_two_step,
)
from .moments import (
    MomentEvaluation,
    NuisanceParams,
    TargetParams,
    g_moments,
    g_moments_interaction,
    moment_covariance,
)
from .simulation import DgpSpec, ExperimentResult, emit_table, generate, run_experiment

__version__ = "0.1.0"

__all__ = [
    "BootstrapReport",
    "ColumnMap",
    "Dataset",
    "DgpSpec",
    "ExperimentResult",
    "GEstimate",
    "GEstimationMediation",
    "HypothesisSpec",
    "ModelConfig",
    "MomentEvaluation",
    "NuisanceParams",
    "TargetParams",
    "TestOutcome",
    "bootstrap_variance",
    "check_mediation_arrays",
    "chi2_sf",
    "emit_table",
    "fit_nuisance_bias_reduced",
    "fit_nuisance_ml",
    "g_estimate",
    "g_moments",
    "g_moments_interaction",
    "generate",
    "gmm_objective",
    "load_csv",
    "moment_covariance",
    "ols_sobel_lr",
    "robust_sobel",
    "robust_wald_direct",
    "run_experiment",
    "score_test_cue",
    "score_test_two_step",
    "standardize",
    "x_bar_oracle",
]
