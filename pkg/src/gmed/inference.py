"""Hypothesis tests for the family H_alpha: (alpha-1)*b1*b2 + alpha*b3 = 0.

Covers the classical OLS Sobel and joint-significance (LR) tests, robust
Wald tests built from influence functions, and constrained-GMM score tests:

* Two-Step -- nuisances and the moment covariance are frozen at the
  unconstrained fit, then n * M_n is minimized over the null set;
* CUE -- nuisances and the covariance are refit at every candidate beta
  (the Newton system effectively carries the nuisance estimating equations
  through the closed-form profile).

For alpha = 0 the null set {b1*b2 = 0} is the union of the two coordinate
planes, and the statistic is the smaller of the two branch minima; each
branch constraint has full-rank Jacobian, which restores the chi-square(1)
calibration despite the singular point at b1 = b2 = 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.special import gammaincc

from .data import Dataset, ModelConfig
from .estimation import GEstimate, NuisanceProfile, g_estimate
from .exceptions import (
    NonConvergence,
    OrthogonalityRequired,
    RankDeficient,
    SingularWeight,
    ZeroDenominator,
)
from .linalg import RootSolveReport, newton_solve, weighted_least_squares
from .moments import (
    NuisanceParams,
    TargetParams,
    exposure_mean_and_slope,
    g_moments,
    g_moments_interaction,
)

SCORE_GRAD_TOL = 1e-7
RIDGE_CONDITION_LIMIT = 1e12


def chi2_sf(statistic: float, df: int = 1) -> float:
    """Upper tail of the chi-square distribution via the regularized
    incomplete gamma function."""
    if statistic <= 0.0:
        return 1.0
    return float(gammaincc(0.5 * df, 0.5 * statistic))


@dataclass(frozen=True)
class HypothesisSpec:
    """A member of the null family, identified by alpha in [0, 1]."""

    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    @property
    def label(self) -> str:
        if self.alpha == 0.0:
            return "no-mediation"
        if self.alpha == 1.0:
            return "no-direct-effect"
        return "general"

    def psi(self, beta: np.ndarray) -> float:
        return (self.alpha - 1.0) * beta[0] * beta[1] + self.alpha * beta[2]

    def psi_grad(self, beta: np.ndarray) -> np.ndarray:
        return np.array(
            [(self.alpha - 1.0) * beta[1], (self.alpha - 1.0) * beta[0], self.alpha]
        )


@dataclass(frozen=True)
class TestOutcome:
    """A single test result referred to a chi-square distribution."""

    statistic: float
    df: int
    p_value: float
    method: str
    branch: Optional[str] = None
    constrained_beta: Optional[TargetParams] = None
    lagrange_multiplier: Optional[float] = None
    solver_report: Optional[RootSolveReport] = None


def _solve_spd(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve with a symmetric PSD matrix, adding a small trace-scaled ridge
    when the conditioning exceeds ``RIDGE_CONDITION_LIMIT``."""
    try:
        chol, low = scipy.linalg.cho_factor(mat, check_finite=False)
        diag = np.abs(np.diag(chol))
        # diag(L) ratio squared is a cheap proxy for the 2-norm condition
        if (diag.min() / diag.max()) ** 2 > 1.0 / RIDGE_CONDITION_LIMIT:
            return scipy.linalg.cho_solve((chol, low), rhs, check_finite=False)
    except scipy.linalg.LinAlgError:
        pass
    k = mat.shape[0]
    work = mat + np.eye(k) * (1e-10 * np.trace(mat) / k + 1e-300)
    try:
        return np.linalg.solve(work, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularWeight("moment covariance is numerically singular") from exc


# --------------------------------------------------------------------------
# classical OLS tests
# --------------------------------------------------------------------------


def ols_product_fit(dataset: Dataset):
    """OLS coefficient estimates and classical standard errors for the
    mediator regression (M on X, Z) and outcome regression (Y on M, X, Z).

    Returns ((b1, se1), (b2, se2), (b3, se3)).
    """
    z = dataset.confounders
    x, m, y, w = dataset.exposure, dataset.mediator, dataset.outcome, dataset.weights

    def fit(design, response):
        lf = weighted_least_squares(design, response, w)
        dof = design.shape[0] - design.shape[1]
        if dof <= 0:
            raise RankDeficient("not enough rows for OLS standard errors")
        sigma2 = float(np.dot(w, lf.residuals**2)) / dof
        gram = design.T @ (design * w[:, None])
        cov = sigma2 * np.linalg.inv(gram)
        return lf.coefficients, np.sqrt(np.diag(cov))

    coef_m, se_m = fit(np.column_stack([x, z]), m)
    coef_y, se_y = fit(np.column_stack([m, x, z]), y)
    return (coef_m[0], se_m[0]), (coef_y[0], se_y[0]), (coef_y[1], se_y[1])


def ols_sobel_lr(dataset: Dataset) -> tuple[TestOutcome, TestOutcome]:
    """Classical Sobel (Wald) and joint-significance (LR) tests of
    no-mediation from the OLS fits: W = T1*T2/(T1+T2), LR = min(T1, T2)."""
    (b1, se1), (b2, se2), _ = ols_product_fit(dataset)
    t1 = (b1 / se1) ** 2
    t2 = (b2 / se2) ** 2
    wald = 0.0 if t1 + t2 == 0.0 else t1 * t2 / (t1 + t2)
    lr = min(t1, t2)
    return (
        TestOutcome(wald, 1, chi2_sf(wald), "sobel-ols"),
        TestOutcome(lr, 1, chi2_sf(lr), "lr-ols"),
    )


# --------------------------------------------------------------------------
# robust Wald tests from influence functions
# --------------------------------------------------------------------------


def robust_sobel(estimate: GEstimate) -> TestOutcome:
    """Wald test of no-mediation from the G-estimates.

    W = b1^2 b2^2 / (b1^2 s2^2 + b2^2 s1^2 + 2 b1 b2 D). Conservative when
    both b1 and b2 are truly zero (the statistic then tends to a quarter of
    a chi-square(1), so nominal-level rejection is below size).
    """
    b1, b2 = estimate.beta_hat.beta1, estimate.beta_hat.beta2
    cov = estimate.beta_cov
    denom = b1 * b1 * cov[1, 1] + b2 * b2 * cov[0, 0] + 2.0 * b1 * b2 * cov[0, 1]
    if denom <= 0.0:
        if b1 * b2 == 0.0 and (cov[0, 0] > 0.0 or cov[1, 1] > 0.0):
            return TestOutcome(0.0, 1, 1.0, "robust-sobel")
        raise ZeroDenominator("degenerate variance for the product estimate")
    stat = (b1 * b2) ** 2 / denom
    return TestOutcome(stat, 1, chi2_sf(stat), "robust-sobel")


def robust_wald_direct(estimate: GEstimate) -> TestOutcome:
    """Squared t-statistic for the direct effect: b3^2 / s3^2 vs chi2(1)."""
    var3 = estimate.beta_cov[2, 2]
    if var3 <= 0.0:
        raise ZeroDenominator("zero variance for the direct-effect estimate")
    stat = estimate.beta_hat.beta3 ** 2 / var3
    return TestOutcome(stat, 1, chi2_sf(stat), "robust-wald-direct")


# --------------------------------------------------------------------------
# GMM objective and constrained score tests
# --------------------------------------------------------------------------


def gmm_objective(
    dataset: Dataset,
    beta: TargetParams,
    gamma: NuisanceParams,
    weight_matrix: np.ndarray,
    config: Optional[ModelConfig] = None,
) -> float:
    """Quadratic form E_n[U]' W^-1 E_n[U]; zero exactly when the moment
    means vanish (the exactly identified case is weight-independent)."""
    config = config or ModelConfig()
    if config.interaction_enabled:
        ev = g_moments_interaction(dataset, beta, gamma, config)
    else:
        ev = g_moments(dataset, beta, gamma, config)
    weight_matrix = np.asarray(weight_matrix, dtype=float)
    try:
        cond = np.linalg.cond(weight_matrix)
        if not np.isfinite(cond) or cond > 1e14:
            raise SingularWeight("weight matrix is numerically singular")
        sol = np.linalg.solve(weight_matrix, ev.U_bar)
    except np.linalg.LinAlgError as exc:
        raise SingularWeight("weight matrix is numerically singular") from exc
    return float(ev.U_bar @ sol)


class _TwoStepObjective:
    """n * M_n(beta) with nuisances and covariance frozen at the
    unconstrained fit. The moment means are then quadratic polynomials in
    beta, so values, gradients and Hessians are closed-form in a handful of
    scalars."""

    def __init__(self, dataset: Dataset, config: ModelConfig, est: GEstimate):
        z = dataset.confounders
        x, m, y, w = dataset.exposure, dataset.mediator, dataset.outcome, dataset.weights
        wsum = float(w.sum())
        gm = est.gamma_hat
        ex1 = x - exposure_mean_and_slope(z @ gm.gamma_x1, config.exposure_family)[0]
        ex2 = x - exposure_mean_and_slope(z @ gm.gamma_x2, config.exposure_family)[0]
        am1 = m - z @ gm.gamma_m1
        am2 = m - z @ gm.gamma_m2
        ay1 = y - z @ gm.gamma_y1
        ay2 = y - z @ gm.gamma_y2

        def en(v):
            return float(np.dot(w, v)) / wsum

        self.n = dataset.n
        self.a0 = en(ex1 * am1)
        self.a1 = en(ex1 * x)
        self.c00 = en(am2 * ay1)
        self.c0m = en(am2 * m)
        self.c0x = en(am2 * x)
        self.cx0 = en(x * ay1)
        self.cxm = en(x * m)
        self.cxx = en(x * x)
        self.d0 = en(ex2 * ay2)
        self.dm = en(ex2 * m)
        self.dx = en(ex2 * x)
        self.i_hat = est.moment_eval.I_hat

    def moments(self, b: np.ndarray) -> np.ndarray:
        u1 = self.a0 - b[0] * self.a1
        u2 = (
            self.c00
            - b[1] * self.c0m
            - b[2] * self.c0x
            - b[0] * (self.cx0 - b[1] * self.cxm - b[2] * self.cxx)
        )
        u3 = self.d0 - b[1] * self.dm - b[2] * self.dx
        return np.array([u1, u2, u3])

    def moment_jac(self, b: np.ndarray) -> np.ndarray:
        return np.array(
            [
                [-self.a1, 0.0, 0.0],
                [
                    -(self.cx0 - b[1] * self.cxm - b[2] * self.cxx),
                    -self.c0m + b[0] * self.cxm,
                    -self.c0x + b[0] * self.cxx,
                ],
                [0.0, -self.dm, -self.dx],
            ]
        )

    def value(self, b: np.ndarray) -> float:
        u = self.moments(b)
        return self.n * float(u @ _solve_spd(self.i_hat, u))

    def grad(self, b: np.ndarray) -> np.ndarray:
        u = self.moments(b)
        q = _solve_spd(self.i_hat, u)
        return 2.0 * self.n * (self.moment_jac(b).T @ q)

    def grad_and_hess(self, b: np.ndarray):
        u = self.moments(b)
        q = _solve_spd(self.i_hat, u)
        jac = self.moment_jac(b)
        grad = 2.0 * self.n * (jac.T @ q)
        # only U2 has curvature: d2U2/db1db2 = cxm, d2U2/db1db3 = cxx
        curv = np.zeros((3, 3))
        curv[0, 1] = curv[1, 0] = q[1] * self.cxm
        curv[0, 2] = curv[2, 0] = q[1] * self.cxx
        iinv_jac = np.column_stack([_solve_spd(self.i_hat, jac[:, j]) for j in range(3)])
        hess = 2.0 * self.n * (jac.T @ iinv_jac + curv)
        return grad, hess


_CUE_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_PAIR_TO_MATRIX = np.array([[0, 1, 2], [1, 3, 4], [2, 4, 5]])


class _CueObjective:
    """n * M_n(beta) with nuisances and covariance refit at each beta via
    the closed-form profile (continuous updating).

    Each profiled per-row moment is a product of two forms affine in
    s = (1, b1, b2, b3). Writing ss = vec(s s'), the moment means are
    ``G @ ss`` and each covariance entry is ``ss' M ss`` for matrices
    precomputed here from the residual bases, so objective, gradient and
    Hessian evaluations involve no per-row work at all.
    """

    def __init__(self, dataset: Dataset, config: ModelConfig,
                 profile: Optional[NuisanceProfile] = None):
        pr = profile or NuisanceProfile(dataset, config)
        w = dataset.weights
        wsum = float(w.sum())
        self.n = dataset.n
        n = self.n
        zero = np.zeros(n)
        rxv, rxw = pr.resid["v", "x"], pr.resid["w", "x"]
        rmv, rmw = pr.resid["v", "m"], pr.resid["w", "m"]
        ryv, ryw = pr.resid["v", "y"], pr.resid["w", "y"]

        left = (
            np.column_stack([pr.ex, zero, zero, zero]),
            np.column_stack([rmw, -rxw, zero, zero]),
            np.column_stack([pr.ex, zero, zero, zero]),
        )
        right = (
            np.column_stack([rmv, -rxv, zero, zero]),
            np.column_stack([ryw, zero, -rmw, -rxw]),
            np.column_stack([ryv, zero, -rmv, -rxv]),
        )
        prod = [
            (left[j][:, :, None] * right[j][:, None, :]).reshape(n, 16) for j in range(3)
        ]
        self.gmat = np.stack([(w @ p) / wsum for p in prod])  # (3, 16)
        m = np.stack(
            [prod[j].T @ (prod[k] * w[:, None]) / wsum for j, k in _CUE_PAIRS]
        )
        msym = 0.5 * (m + m.transpose(0, 2, 1))
        self.mflat = msym.reshape(6 * 16, 16)

        eye = np.eye(4)
        self.d2ss = {
            (p, q): ((eye[p + 1][:, None] * eye[q + 1][None, :])
                     + (eye[q + 1][:, None] * eye[p + 1][None, :])).ravel()
            for p in range(3)
            for q in range(3)
        }

    @staticmethod
    def _to_matrix(vals6: np.ndarray) -> np.ndarray:
        return vals6[_PAIR_TO_MATRIX]

    def _core(self, b: np.ndarray):
        s = np.array([1.0, b[0], b[1], b[2]])
        ss = np.outer(s, s).ravel()
        ubar = self.gmat @ ss
        v = (self.mflat @ ss).reshape(6, 16)  # M_sym @ ss per covariance entry
        i_hat = self._to_matrix(v @ ss)
        q = _solve_spd(i_hat, ubar)
        return s, ss, ubar, v, i_hat, q

    def _dss_at(self, s: np.ndarray, p: int) -> np.ndarray:
        d = np.zeros((4, 4))
        d[p + 1, :] += s
        d[:, p + 1] += s
        return d.ravel()

    def value(self, b: np.ndarray) -> float:
        _, _, ubar, _, _, q = self._core(b)
        return self.n * float(ubar @ q)

    def grad(self, b: np.ndarray) -> np.ndarray:
        s, _, ubar, v, _, q = self._core(b)
        out = np.empty(3)
        for p in range(3):
            dss = self._dss_at(s, p)
            dubar = self.gmat @ dss
            dihat = self._to_matrix(2.0 * (v @ dss))
            out[p] = self.n * (2.0 * float(dubar @ q) - float(q @ dihat @ q))
        return out

    def grad_and_hess(self, b: np.ndarray):
        s, _, ubar, v, i_hat, q = self._core(b)
        dss = [self._dss_at(s, p) for p in range(3)]
        dubar = [self.gmat @ d for d in dss]
        dihat = [self._to_matrix(2.0 * (v @ d)) for d in dss]
        wmat = [(self.mflat @ d).reshape(6, 16) for d in dss]
        dq = [
            _solve_spd(i_hat, dubar[p] - dihat[p] @ q) for p in range(3)
        ]
        grad = np.array(
            [self.n * (2.0 * float(dubar[p] @ q) - float(q @ dihat[p] @ q)) for p in range(3)]
        )
        hess = np.empty((3, 3))
        for p in range(3):
            for r in range(p, 3):
                d2 = self.d2ss[p, r]
                d2ubar = self.gmat @ d2
                d2ihat = self._to_matrix(2.0 * (wmat[p] @ dss[r] + v @ d2))
                val = self.n * (
                    2.0 * float(d2ubar @ q)
                    + 2.0 * float(dubar[p] @ dq[r])
                    - 2.0 * float(q @ dihat[p] @ dq[r])
                    - float(q @ d2ihat @ q)
                )
                hess[p, r] = val
                hess[r, p] = val
        return grad, hess


def _project_to_constraint(beta: np.ndarray, hyp: HypothesisSpec) -> np.ndarray:
    """Move the unconstrained estimate onto {psi=0} along the constraint
    gradient (one-dimensional Newton on psi)."""
    b = beta.copy()
    for _ in range(50):
        val = hyp.psi(b)
        if abs(val) < 1e-12:
            break
        grad = hyp.psi_grad(b)
        norm2 = float(grad @ grad)
        if norm2 == 0.0:
            b[0] = 0.0  # singular point of the alpha=0 constraint
            break
        b = b - grad * (val / norm2)
    return b


def _minimize_fixed_coordinate(objective, start: np.ndarray, fixed: int):
    """Damped Newton descent on the reduced problem with one coordinate
    pinned to zero.

    The line search monotonizes the objective (not just the gradient norm),
    so the iteration cannot drift to the spurious distant stationary points
    the GMM objectives exhibit; an indefinite Hessian falls back to a
    gradient step.
    """
    free = [j for j in range(3) if j != fixed]

    def embed(u):
        b = np.zeros(3)
        b[free] = u
        return b

    u = start[free].copy()
    value = objective.value(embed(u))
    grad_norm = np.inf
    iterations = 0
    converged = False
    for iterations in range(1, 81):
        grad, hess = objective.grad_and_hess(embed(u))
        g = grad[free]
        grad_norm = float(np.max(np.abs(g)))
        if grad_norm <= SCORE_GRAD_TOL * max(1.0, abs(value)):
            converged = True
            break
        h = hess[np.ix_(free, free)]
        try:
            step = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            step = -g
        descent = float(g @ step)
        if not np.isfinite(descent) or descent >= 0.0:
            step = -g * (np.linalg.norm(step) / max(np.linalg.norm(g), 1e-300))
            descent = float(g @ step)
        # Newton decrement: predicted improvement below rounding means the
        # minimum is resolved even if the gradient floor (which scales with
        # the n-proportional curvature) sits above the plain tolerance
        if -descent / 2.0 <= 1e-11 * (1.0 + abs(value)):
            converged = True
            break
        alpha = 1.0
        accepted = False
        for _ in range(40):
            trial = u + alpha * step
            trial_value = objective.value(embed(trial))
            if trial_value <= value + 1e-4 * alpha * descent:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # progress stalled at rounding level; accept as converged when
            # the gradient is already small on a looser scale
            converged = grad_norm <= 1e-5 * max(1.0, abs(value))
            break
        u = u + alpha * step
        value = trial_value
    report = RootSolveReport(
        solution=u, iterations=iterations, final_residual_norm=grad_norm,
        converged=converged,
    )
    beta_c = embed(u)
    lam = float(objective.grad(beta_c)[fixed])
    return beta_c, report, lam


def _minimize_lagrange(objective, start: np.ndarray, hyp: HypothesisSpec):
    """Damped Newton on the Lagrange stationarity system for general alpha.

    The stationarity residual inherits the n-proportional scale of the
    objective gradient, so the tolerance is floored accordingly.
    """

    def residual(v):
        b, lam = v[:3], v[3]
        return np.append(objective.grad(b) - lam * hyp.psi_grad(b), hyp.psi(b))

    jacobian = None
    if hasattr(objective, "grad_and_hess"):
        psi_hess = np.zeros((3, 3))
        psi_hess[0, 1] = psi_hess[1, 0] = hyp.alpha - 1.0

        def jacobian(v):
            b, lam = v[:3], v[3]
            _, hess = objective.grad_and_hess(b)
            grad_psi = hyp.psi_grad(b)
            out = np.zeros((4, 4))
            out[:3, :3] = hess - lam * psi_hess
            out[:3, 3] = -grad_psi
            out[3, :3] = grad_psi
            return out

    report = newton_solve(
        residual_fn=residual,
        jacobian_fn=jacobian,
        start=np.append(start, 0.0),
        tol=max(SCORE_GRAD_TOL, 1e-10 * objective.n),
        max_iter=80,
    )
    beta_c = report.solution[:3]
    return beta_c, report, float(report.solution[3])


def _constrained_minimum(objective, bhat: np.ndarray, hyp: HypothesisSpec):
    """Minimize the score objective over the null set; for alpha=0 take the
    smaller of the two coordinate-plane branch minima."""
    if hyp.alpha == 0.0:
        candidates = []
        for fixed, name in ((0, "C1"), (1, "C2")):
            start = bhat.copy()
            start[fixed] = 0.0
            try:
                beta_c, report, lam = _minimize_fixed_coordinate(objective, start, fixed)
            except Exception:
                continue
            if report.converged:
                value = objective.value(beta_c)
                # a stationary point above the feasible start is not a minimum
                if value > objective.value(start) + 1e-9 * (1.0 + abs(value)):
                    continue
                candidates.append((value, beta_c, report, lam, name))
        if not candidates:
            raise NonConvergence("both no-mediation branch minimizations failed")
        if len(candidates) == 1:
            warnings.warn(
                "only one no-mediation branch converged; using it", RuntimeWarning
            )
        return min(candidates, key=lambda c: c[0])

    start = _project_to_constraint(bhat, hyp)
    if hyp.alpha == 1.0:
        beta_c, report, lam = _minimize_fixed_coordinate(objective, start, fixed=2)
    else:
        beta_c, report, lam = _minimize_lagrange(objective, start, hyp)
    if not report.converged:
        raise NonConvergence(
            "constrained score minimization failed",
            residual_norm=report.final_residual_norm,
        )
    return objective.value(beta_c), beta_c, report, lam, "general"


def _score_outcome(objective, est: GEstimate, hyp: HypothesisSpec, method: str) -> TestOutcome:
    stat, beta_c, report, lam, branch = _constrained_minimum(
        objective, est.beta_hat.as_vector(), hyp
    )
    stat = max(float(stat), 0.0)
    return TestOutcome(
        statistic=stat,
        df=1,
        p_value=chi2_sf(stat),
        method=method,
        branch=branch if hyp.alpha == 0.0 else None,
        constrained_beta=TargetParams.from_vector(beta_c),
        lagrange_multiplier=lam,
        solver_report=report,
    )


def _check_score_config(config: ModelConfig):
    if config.interaction_enabled:
        raise ValueError("score tests are defined for the three-moment system only")


def score_test_two_step(
    dataset: Dataset,
    config: ModelConfig,
    hypothesis: HypothesisSpec,
    estimate: Optional[GEstimate] = None,
) -> TestOutcome:
    """Two-Step constrained-GMM score test of H_alpha.

    Nuisances and the moment covariance stay frozen at the unconstrained
    fit; the statistic is referred to chi-square(1).
    """
    _check_score_config(config)
    est = estimate or g_estimate(dataset, config)
    objective = _TwoStepObjective(dataset, config, est)
    return _score_outcome(objective, est, hypothesis, "score-two-step")


def score_test_cue(
    dataset: Dataset,
    config: ModelConfig,
    hypothesis: HypothesisSpec,
    estimate: Optional[GEstimate] = None,
    allow_ml: bool = False,
) -> TestOutcome:
    """Continuously-updated constrained-GMM score test of H_alpha.

    Requires the bias-reduced (orthogonal) nuisance strategy: the
    chi-square(1) calibration of the constrained minimum leans on
    E_n[dU/dgamma] = 0 holding along the path. Pass ``allow_ml=True`` to
    override (results are then sensitive to working-model misspecification).
    """
    _check_score_config(config)
    if config.nuisance_strategy != "bias-reduced" and not allow_ml:
        raise OrthogonalityRequired(
            "CUE score test requires bias-reduced nuisance estimation; "
            "pass allow_ml=True to override"
        )
    est = estimate or g_estimate(dataset, config)
    prof = est.nuisance_profile
    objective = getattr(prof, "cue_objective_cache", None)
    if objective is None:
        objective = _CueObjective(dataset, config, profile=prof)
        if prof is not None:
            prof.cue_objective_cache = objective
    return _score_outcome(objective, est, hypothesis, "score-cue")
