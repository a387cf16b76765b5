"""Scikit-learn style estimator facade for mediation G-estimation.

The estimator follows the sklearn contract: hyperparameters in
``__init__`` (``get_params``/``set_params`` work as usual), data enters
through ``fit``, and fitted quantities are exposed as trailing-underscore
attributes. The mediator and exposure are passed as keyword arrays next to
the confounder matrix ``X`` and outcome ``y``.

    model = GEstimationMediation(exposure_family="bernoulli-logit")
    model.fit(X, y, mediator=m, exposure=x)
    model.nide_, model.nide_se_
    model.hypothesis_test("no-mediation", method="score-cue")
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .data import Dataset, ModelConfig
from .estimation import BootstrapReport, bootstrap_variance, g_estimate
from .inference import (
    HypothesisSpec,
    TestOutcome,
    ols_sobel_lr,
    robust_sobel,
    robust_wald_direct,
    score_test_cue,
    score_test_two_step,
)

_TEST_DISPATCH = {
    "sobel-ols": None,
    "lr-ols": None,
    "robust-sobel": None,
    "robust-wald-direct": None,
    "score-two-step": score_test_two_step,
    "score-cue": score_test_cue,
}


def check_mediation_arrays(X, y, mediator, exposure, sample_weight=None):
    """Validate and coerce the four variable roles to aligned float arrays.

    ``X`` may be None (intercept-only confounding). Returns
    (confounders or None, outcome, mediator, exposure, weights or None).
    """
    y = np.asarray(check_array(y, ensure_2d=False, dtype=float), dtype=float)
    mediator = np.asarray(check_array(mediator, ensure_2d=False, dtype=float), dtype=float)
    exposure = np.asarray(check_array(exposure, ensure_2d=False, dtype=float), dtype=float)
    for name, arr in (("y", y), ("mediator", mediator), ("exposure", exposure)):
        if arr.ndim != 1:
            raise ValueError(f"{name} must be one-dimensional")
    if X is not None:
        X = check_array(X, ensure_2d=False, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        check_consistent_length(X, y)
    if sample_weight is not None:
        sample_weight = np.asarray(
            check_array(sample_weight, ensure_2d=False, dtype=float), dtype=float
        )
        check_consistent_length(sample_weight, y)
    check_consistent_length(y, mediator, exposure)
    return X, y, mediator, exposure, sample_weight


class GEstimationMediation(BaseEstimator):
    """G-estimation of natural direct and indirect effects under partially
    linear mediator/outcome models.

    Parameters
    ----------
    exposure_family : {"gaussian-identity", "bernoulli-logit"}
        Working model for E(X|Z).
    nuisance : {"bias-reduced", "maximum-likelihood"}
        Nuisance fitting strategy; bias-reduced makes the moment conditions
        orthogonal to nuisance errors at the fit.
    interaction : bool
        Estimate an exposure-mediator interaction via the four-moment
        system.
    bootstrap : int
        Number of bootstrap replicates for resampling standard errors
        (0 skips the bootstrap).
    seed : int
        Bootstrap seed.

    Attributes (after fit)
    ----------------------
    beta1_, beta2_, beta3_, theta_ : structural coefficients
    nide_, nide_se_, nde_, nde_se_ : mediated/direct effects and SEs
    beta_cov_ : covariance of the coefficient estimates
    influence_ : per-observation influence values, one column per parameter
    result_ : the underlying :class:`gmed.estimation.GEstimate`
    bootstrap_ : :class:`gmed.estimation.BootstrapReport` or None
    n_iter_ : outer Newton iterations
    """

    def __init__(
        self,
        exposure_family: str = "gaussian-identity",
        nuisance: str = "bias-reduced",
        interaction: bool = False,
        bootstrap: int = 0,
        seed: int = 0,
    ):
        self.exposure_family = exposure_family
        self.nuisance = nuisance
        self.interaction = interaction
        self.bootstrap = bootstrap
        self.seed = seed

    def _config(self) -> ModelConfig:
        strategy = {
            "ml": "maximum-likelihood",
            "maximum-likelihood": "maximum-likelihood",
            "bias-reduced": "bias-reduced",
        }.get(self.nuisance)
        if strategy is None:
            raise ValueError(f"unknown nuisance strategy {self.nuisance!r}")
        return ModelConfig(self.exposure_family, self.interaction, strategy)

    def fit(self, X, y, *, mediator, exposure, sample_weight=None):
        """Fit the structural parameters.

        Parameters
        ----------
        X : (n, q) confounder matrix or None
            The intercept column is added internally.
        y : (n,) outcome
        mediator, exposure : (n,) arrays
        sample_weight : optional (n,) nonnegative weights
        """
        X, y, mediator, exposure, sample_weight = check_mediation_arrays(
            X, y, mediator, exposure, sample_weight
        )
        config = self._config()
        dataset = Dataset.build(y, mediator, exposure, X, sample_weight)
        result = g_estimate(dataset, config)

        self.dataset_ = dataset
        self.result_ = result
        self.beta1_ = result.beta_hat.beta1
        self.beta2_ = result.beta_hat.beta2
        self.beta3_ = result.beta_hat.beta3
        self.theta_ = result.beta_hat.theta
        self.nide_ = result.nide
        self.nide_se_ = result.nide_se
        self.nde_ = result.nde
        self.nde_se_ = result.nde_se
        self.beta_cov_ = result.beta_cov
        self.influence_ = result.influence_rows
        self.near_singular_nide_ = result.near_singular_nide
        self.n_iter_ = result.solver_report.iterations
        self.bootstrap_: Optional[BootstrapReport] = None
        if self.bootstrap:
            self.bootstrap_ = bootstrap_variance(dataset, config, self.bootstrap, self.seed)
        return self

    def conf_int(self, level: float = 0.95) -> dict:
        """Normal-based confidence intervals for the reported effects."""
        check_is_fitted(self, "result_")
        from scipy.stats import norm

        zq = float(norm.ppf(0.5 + level / 2.0))
        out = {}
        ses = self.result_.beta_se
        names = ["beta1", "beta2", "beta3"] + (["theta"] if self.theta_ is not None else [])
        values = [self.beta1_, self.beta2_, self.beta3_] + (
            [self.theta_] if self.theta_ is not None else []
        )
        for name, val, se in zip(names, values, ses):
            out[name] = (val - zq * se, val + zq * se)
        out["nide"] = (self.nide_ - zq * self.nide_se_, self.nide_ + zq * self.nide_se_)
        out["nde"] = (self.nde_ - zq * self.nde_se_, self.nde_ + zq * self.nde_se_)
        return out

    def hypothesis_test(self, hypothesis: str = "no-mediation",
                        method: str = "score-cue") -> TestOutcome:
        """Run a hypothesis test against the fitted model.

        ``hypothesis`` is "no-mediation", "no-direct-effect", or a float
        alpha in [0, 1]; ``method`` is one of sobel-ols, lr-ols,
        robust-sobel, robust-wald-direct, score-two-step, score-cue.
        """
        check_is_fitted(self, "result_")
        if isinstance(hypothesis, str):
            alpha = {"no-mediation": 0.0, "no-direct-effect": 1.0, "no-direct": 1.0}.get(
                hypothesis
            )
            if alpha is None:
                raise ValueError(f"unknown hypothesis {hypothesis!r}")
        else:
            alpha = float(hypothesis)
        hyp = HypothesisSpec(alpha)
        if method == "sobel-ols":
            return ols_sobel_lr(self.dataset_)[0]
        if method == "lr-ols":
            return ols_sobel_lr(self.dataset_)[1]
        if method == "robust-sobel":
            return robust_sobel(self.result_)
        if method == "robust-wald-direct":
            return robust_wald_direct(self.result_)
        fn = _TEST_DISPATCH.get(method)
        if fn is None:
            raise ValueError(f"unknown test method {method!r}")
        return fn(self.dataset_, self._config(), hyp, estimate=self.result_)
