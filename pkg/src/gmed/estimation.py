"""Joint fitting of target and nuisance parameters, influence-function and
bootstrap variances, and the mediated-effect (NIDE/NDE) report.

With linear mediator/outcome working models and a GLM exposure model, both
nuisance criteria reduce to exact weighted regressions given beta:

* maximum likelihood: the exposure GLM of X on Z, plus plain weighted
  regressions of the offset mediator and outcome residuals on Z;
* bias-reduced: the same exposure fit, while the mediator/outcome copies
  entering U1 and U3 are refit with the exposure-link slope h'(Z'gx) as an
  extra weight, which solves E_n[dU/dgamma] = 0 exactly.

Every nuisance coefficient is therefore an affine function of beta, so the
fit profiles out gamma and runs damped Newton on the three (or four) moment
equations with an analytic total Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset, ModelConfig
from .exceptions import NonConvergence, TooManyFailures, ZeroResidualVariance
from .linalg import (
    RootSolveReport,
    irls_logistic,
    newton_solve,
    weighted_least_squares,
    wls_multi,
)
from .moments import (
    MomentEvaluation,
    NuisanceParams,
    TargetParams,
    exposure_mean_and_slope,
    g_moments,
    g_moments_interaction,
)

JOINT_TOL = 1e-10
NEAR_SINGULAR_T = 0.1


@dataclass(frozen=True)
class GEstimate:
    """Fitted G-estimation results.

    ``influence_rows`` holds per-observation influence values for beta (one
    column per target parameter); ``beta_cov`` is E_n[phi phi'] / n, i.e.
    already on the variance scale of the estimate. ``nide`` is beta1*beta2
    and ``nde`` is beta3.
    """

    beta_hat: TargetParams
    gamma_hat: NuisanceParams
    influence_rows: np.ndarray
    beta_cov: np.ndarray
    nide: float
    nide_se: float
    nde: float
    nde_se: float
    solver_report: RootSolveReport
    moment_eval: MomentEvaluation
    config: ModelConfig
    n: int
    near_singular_nide: bool
    # dataset-bound profile kept so downstream score tests can reuse the
    # already-solved nuisance maps
    nuisance_profile: Optional["NuisanceProfile"] = field(default=None, repr=False, compare=False)

    @property
    def beta_se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.beta_cov))


@dataclass(frozen=True)
class BootstrapReport:
    """Nonparametric bootstrap spread of the target estimates."""

    replicates: int
    beta_draws: np.ndarray
    nide_se_boot: float
    nde_se_boot: float
    failures: int


class NuisanceProfile:
    """Per-dataset precomputation turning gamma-hat into an affine map of beta.

    For each weighting (the user weights ``w`` and, under bias reduction
    with a logit exposure, the slope-weighted ``v = h' * w``) it stores the
    regression coefficients of exposure/mediator/outcome (and X*M when the
    interaction is enabled) on the confounders, together with the matching
    residual vectors. Residuals at any beta are then linear combinations of
    these bases.
    """

    def __init__(self, dataset: Dataset, config: ModelConfig):
        config.validate_exposure(dataset.exposure)
        self.dataset = dataset
        self.config = config
        z = dataset.confounders
        w = dataset.weights
        x, m, y = dataset.exposure, dataset.mediator, dataset.outcome
        self.wsum = float(w.sum())

        if config.exposure_family == "bernoulli-logit":
            fit = irls_logistic(z, x, w, tol=1e-10)
        else:
            fit = weighted_least_squares(z, x, w)
        self.gamma_x: np.ndarray = fit.coefficients
        self.h, self.hslope = exposure_mean_and_slope(z @ self.gamma_x, config.exposure_family)
        self.ex = x - self.h

        self.xm = x * m
        names = ["x", "m", "y"] + (["xm"] if config.interaction_enabled else [])
        targets = np.column_stack([x, m, y] + ([self.xm] if config.interaction_enabled else []))

        # Under the bias-reduced strategy the U1/U3 nuisance copies are refit
        # with the exposure-link slope as an extra weight; that solves the
        # orthogonality equations exactly. With an identity link (or under
        # maximum likelihood) both weightings coincide.
        reduced = (
            config.nuisance_strategy == "bias-reduced"
            and config.exposure_family == "bernoulli-logit"
        )
        self.coef = {}
        self.resid = {}
        tags = (("w", w), ("v", self.hslope * w)) if reduced else (("w", w),)
        for tag, wt in tags:
            coefs, resids = wls_multi(z, targets, wt)
            for j, name in enumerate(names):
                self.coef[tag, name] = coefs[:, j]
                self.resid[tag, name] = np.ascontiguousarray(resids[:, j])
        if not reduced:
            for name in names:
                self.coef["v", name] = self.coef["w", name]
                self.resid["v", name] = self.resid["w", name]

    # -- residuals at beta ------------------------------------------------

    def _em(self, tag: str, beta: TargetParams) -> np.ndarray:
        return self.resid[tag, "m"] - beta.beta1 * self.resid[tag, "x"]

    def _ey(self, tag: str, beta: TargetParams) -> np.ndarray:
        out = (
            self.resid[tag, "y"]
            - beta.beta2 * self.resid[tag, "m"]
            - beta.beta3 * self.resid[tag, "x"]
        )
        if beta.theta is not None:
            out = out - beta.theta * self.resid[tag, "xm"]
        return out

    def moment_rows(self, beta: TargetParams) -> np.ndarray:
        """Per-row moments at beta with nuisances refit at that beta."""
        em1, em2 = self._em("v", beta), self._em("w", beta)
        ey1, ey2 = self._ey("w", beta), self._ey("v", beta)
        cols = [self.ex * em1, em2 * ey1, self.ex * ey2]
        if beta.theta is not None:
            cols.append(self.dataset.exposure * em2 * ey1)
        return np.column_stack(cols)

    def moment_mean(self, beta: TargetParams) -> np.ndarray:
        return (self.dataset.weights @ self.moment_rows(beta)) / self.wsum

    def moment_jacobian(self, beta: TargetParams) -> np.ndarray:
        """Total derivative of the mean moments, including the nuisance refit."""
        w = self.dataset.weights
        x = self.dataset.exposure
        rxv, rxw = self.resid["v", "x"], self.resid["w", "x"]
        rmv, rmw = self.resid["v", "m"], self.resid["w", "m"]
        em2 = self._em("w", beta)
        ey1 = self._ey("w", beta)
        k = beta.k
        jac = np.zeros((k, k))

        def en(vec):
            return float(np.dot(w, vec)) / self.wsum

        jac[0, 0] = -en(self.ex * rxv)
        jac[1, 0] = -en(rxw * ey1)
        jac[1, 1] = -en(em2 * rmw)
        jac[1, 2] = -en(em2 * rxw)
        jac[2, 1] = -en(self.ex * rmv)
        jac[2, 2] = -en(self.ex * rxv)
        if k == 4:
            rxmv, rxmw = self.resid["v", "xm"], self.resid["w", "xm"]
            jac[1, 3] = -en(em2 * rxmw)
            jac[2, 3] = -en(self.ex * rxmv)
            jac[3, 0] = -en(x * rxw * ey1)
            jac[3, 1] = -en(x * em2 * rmw)
            jac[3, 2] = -en(x * em2 * rxw)
            jac[3, 3] = -en(x * em2 * rxmw)
        return jac

    def gamma_at(self, beta: TargetParams) -> NuisanceParams:
        """Materialize the nuisance coefficient copies at beta."""

        def gm(tag):
            return self.coef[tag, "m"] - beta.beta1 * self.coef[tag, "x"]

        def gy(tag):
            out = (
                self.coef[tag, "y"]
                - beta.beta2 * self.coef[tag, "m"]
                - beta.beta3 * self.coef[tag, "x"]
            )
            if beta.theta is not None:
                out = out - beta.theta * self.coef[tag, "xm"]
            return out

        return NuisanceParams(
            gamma_x1=self.gamma_x,
            gamma_x2=self.gamma_x,
            gamma_m1=gm("v"),
            gamma_m2=gm("w"),
            gamma_y1=gy("w"),
            gamma_y2=gy("v"),
        )


def fit_nuisance_ml(dataset: Dataset, beta: TargetParams, config: ModelConfig) -> NuisanceParams:
    """Maximum-likelihood nuisance fit at a given beta; copies alias."""
    cfg = ModelConfig(config.exposure_family, config.interaction_enabled, "maximum-likelihood")
    return NuisanceProfile(dataset, cfg).gamma_at(beta)


def fit_nuisance_bias_reduced(
    dataset: Dataset, beta: TargetParams, config: ModelConfig
) -> NuisanceParams:
    """Bias-reduced nuisance fit: solves E_n[dU/dgamma] = 0 at the given beta.

    The shared confounder design makes the gamma blocks equal-dimensional by
    construction (the identifiability requirement of the augmented system).
    The block structure is solved exactly: the exposure GLM score determines
    gamma_x, after which each remaining block is a weighted regression.
    """
    cfg = ModelConfig(config.exposure_family, config.interaction_enabled, "bias-reduced")
    return NuisanceProfile(dataset, cfg).gamma_at(beta)


def _ols_start(dataset: Dataset, config: ModelConfig) -> TargetParams:
    z = dataset.confounders
    x, m, y, w = dataset.exposure, dataset.mediator, dataset.outcome, dataset.weights
    med_fit = weighted_least_squares(np.column_stack([x, z]), m, w)
    b1 = med_fit.coefficients[0]
    if config.interaction_enabled:
        out_fit = weighted_least_squares(np.column_stack([m, x, x * m, z]), y, w)
        return TargetParams(b1, out_fit.coefficients[0], out_fit.coefficients[1],
                            out_fit.coefficients[2])
    out_fit = weighted_least_squares(np.column_stack([m, x, z]), y, w)
    return TargetParams(b1, out_fit.coefficients[0], out_fit.coefficients[1])


def _evaluate_at_fit(dataset, beta, gamma, config) -> MomentEvaluation:
    if config.interaction_enabled:
        return g_moments_interaction(dataset, beta, gamma, config)
    return g_moments(dataset, beta, gamma, config)


def _ml_score_rows(dataset, beta, gamma, config):
    """Per-row ML estimating equations (z-weighted residual scores), one
    block per working model, plus their mean Jacobian pieces."""
    z = dataset.confounders
    x, m, y, w = dataset.exposure, dataset.mediator, dataset.outcome, dataset.weights
    wsum = float(w.sum())
    h, hslope = exposure_mean_and_slope(z @ gamma.gamma_x1, config.exposure_family)
    em = m - beta.beta1 * x - z @ gamma.gamma_m2
    ey = y - beta.beta2 * m - beta.beta3 * x - z @ gamma.gamma_y1
    if beta.theta is not None:
        ey = ey - beta.theta * x * m
    scores = np.hstack([z * (x - h)[:, None], z * em[:, None], z * ey[:, None]])

    p = z.shape[1]
    k = beta.k
    zw = z * w[:, None]
    gram = z.T @ zw / wsum
    gram_x = z.T @ (zw * hslope[:, None]) / wsum

    d_dgamma = np.zeros((3 * p, 3 * p))
    d_dgamma[0:p, 0:p] = -gram_x
    d_dgamma[p : 2 * p, p : 2 * p] = -gram
    d_dgamma[2 * p :, 2 * p :] = -gram

    d_dbeta = np.zeros((3 * p, k))
    zx = zw.T @ x / wsum
    zm = zw.T @ m / wsum
    d_dbeta[p : 2 * p, 0] = -zx
    d_dbeta[2 * p :, 1] = -zm
    d_dbeta[2 * p :, 2] = -zx
    if k == 4:
        d_dbeta[2 * p :, 3] = -(zw.T @ (x * m)) / wsum
    return scores, d_dbeta, d_dgamma


def _influence(dataset, beta, gamma, config, ev: MomentEvaluation) -> np.ndarray:
    """Per-row influence values for beta-hat.

    Under the bias-reduced strategy E_n[dU/dgamma] vanishes at the fit, so
    the nuisance contribution drops out. Under maximum likelihood the
    correction comes from stacking the working-model score equations with
    the moment conditions and inverting the joint Jacobian.
    """
    k = beta.k
    if config.nuisance_strategy == "bias-reduced":
        return -np.linalg.solve(ev.dU_dbeta, ev.U_rows.T).T

    p = gamma.p
    scores, d_dbeta, d_dgamma = _ml_score_rows(dataset, beta, gamma, config)
    # Collapse the aliased copy blocks of dU/dgamma onto the distinct fits.
    b_blocks = ev.dU_dgamma.reshape(k, 6, p)
    b = np.concatenate(
        [b_blocks[:, 0] + b_blocks[:, 1], b_blocks[:, 2] + b_blocks[:, 3],
         b_blocks[:, 4] + b_blocks[:, 5]],
        axis=1,
    )
    joint = np.zeros((k + 3 * p, k + 3 * p))
    joint[:k, :k] = ev.dU_dbeta
    joint[:k, k:] = b
    joint[k:, :k] = d_dbeta
    joint[k:, k:] = d_dgamma
    stacked = np.hstack([ev.U_rows, scores])
    return -np.linalg.solve(joint, stacked.T).T[:, :k]


def g_estimate(
    dataset: Dataset,
    config: ModelConfig,
    start: Optional[TargetParams] = None,
) -> GEstimate:
    """Solve E_n[U(beta, gamma-hat(beta))] = 0 jointly with the nuisance
    criterion and assemble effects, influence rows and variances.

    The outer iteration alternates an analytic-Jacobian Newton step for beta
    with the exact nuisance refit at the updated beta; convergence requires
    the joint residual below 1e-8.
    """
    profile = NuisanceProfile(dataset, config)
    if start is None:
        start = _ols_start(dataset, config)
    if config.interaction_enabled and start.theta is None:
        start = TargetParams(start.beta1, start.beta2, start.beta3, 0.0)

    report = newton_solve(
        residual_fn=lambda b: profile.moment_mean(TargetParams.from_vector(b)),
        jacobian_fn=lambda b: profile.moment_jacobian(TargetParams.from_vector(b)),
        start=start.as_vector(),
        tol=JOINT_TOL,
        max_iter=100,
    )
    if not report.converged:
        raise NonConvergence(
            "G-estimation did not converge", residual_norm=report.final_residual_norm
        )
    beta_hat = TargetParams.from_vector(report.solution)
    gamma_hat = profile.gamma_at(beta_hat)
    ev = _evaluate_at_fit(dataset, beta_hat, gamma_hat, config)

    phi = _influence(dataset, beta_hat, gamma_hat, config, ev)
    w = dataset.weights
    wsum = float(w.sum())
    n = dataset.n
    beta_cov = (phi * w[:, None]).T @ phi / wsum / n
    beta_cov = 0.5 * (beta_cov + beta_cov.T)

    omega = beta_hat.beta1 * phi[:, 1] + beta_hat.beta2 * phi[:, 0]
    nide_se = float(np.sqrt(np.dot(w, omega**2) / wsum / n))
    nde_se = float(np.sqrt(max(beta_cov[2, 2], 0.0)))

    se1, se2 = np.sqrt(max(beta_cov[0, 0], 0.0)), np.sqrt(max(beta_cov[1, 1], 0.0))
    near_singular = bool(
        se1 > 0
        and se2 > 0
        and abs(beta_hat.beta1) / se1 < NEAR_SINGULAR_T
        and abs(beta_hat.beta2) / se2 < NEAR_SINGULAR_T
    )

    return GEstimate(
        beta_hat=beta_hat,
        gamma_hat=gamma_hat,
        influence_rows=phi,
        beta_cov=beta_cov,
        nide=float(beta_hat.beta1 * beta_hat.beta2),
        nide_se=nide_se,
        nde=float(beta_hat.beta3),
        nde_se=nde_se,
        solver_report=report,
        moment_eval=ev,
        config=config,
        n=n,
        near_singular_nide=near_singular,
        nuisance_profile=profile,
    )


def bootstrap_variance(
    dataset: Dataset,
    config: ModelConfig,
    replicates: int,
    seed: int,
) -> BootstrapReport:
    """Nonparametric row-resampling bootstrap of the G-estimates.

    Each replicate draws rows with replacement using an independent stream
    keyed by (seed, replicate), so results are bit-identical across runs and
    parallel schedules. Replicates whose fit fails are counted, not imputed;
    more than 5% failures raises TooManyFailures.
    """
    if replicates < 100:
        raise ValueError("bootstrap needs at least 100 replicates")
    n = dataset.n
    draws = []
    failures = 0
    for r in range(replicates):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(r,)))
        idx = rng.integers(0, n, size=n)
        try:
            est = g_estimate(dataset.replace_rows(idx), config)
        except Exception:
            failures += 1
            continue
        draws.append(np.append(est.beta_hat.as_vector(), est.nide))
    if failures > 0.05 * replicates:
        raise TooManyFailures(failures, replicates)
    arr = np.asarray(draws)
    nide_se = float(np.std(arr[:, -1], ddof=1))
    nde_se = float(np.std(arr[:, 2], ddof=1))
    return BootstrapReport(
        replicates=replicates,
        beta_draws=arr[:, :-1],
        nide_se_boot=nide_se,
        nde_se_boot=nde_se,
        failures=failures,
    )


def x_bar_oracle(dataset: Dataset, beta1: float, gamma_m: np.ndarray) -> float:
    """Residual-variance-weighted average of the exposure.

    Plug-in of E[X var(M|X,Z)] / E[var(M|X,Z)] using the residuals of the
    fitted mediator model (beta1, gamma_m); this is the exposure level at
    which the no-interaction NIDE limit beta1*(beta2 + theta*xbar) is
    anchored when an interaction term was wrongly omitted.
    """
    em = dataset.mediator - beta1 * dataset.exposure - dataset.confounders @ np.asarray(gamma_m)
    w = dataset.weights
    denom = float(np.dot(w, em**2))
    if denom == 0.0:
        raise ZeroResidualVariance("fitted mediator residuals are identically zero")
    return float(np.dot(w, dataset.exposure * em**2) / denom)
