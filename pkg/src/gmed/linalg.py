"""Dense numerical kernel: weighted least squares, IRLS logistic regression,
and damped Newton-Raphson root finding.

All routines are pure functions of their inputs and hold no shared state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.special

from .exceptions import (
    DimensionMismatch,
    NonConvergence,
    RankDeficient,
    SeparationDetected,
    SingularJacobian,
)

NEWTON_TOL = 1e-8
IRLS_TOL = 1e-8
RANK_RTOL = 1e-12
SEPARATION_CAP = 30.0
MAX_HALVINGS = 20


@dataclass(frozen=True)
class LinearFit:
    """Result of a weighted linear or logistic fit.

    Attributes
    ----------
    coefficients : ndarray, shape (p,)
    residuals : ndarray, shape (n,)
        Response-scale residuals: ``y - X b`` (linear) or ``y - expit(X b)``
        (logistic).
    design_rank : int
        Number of columns; full column rank is enforced.
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    design_rank: int


@dataclass(frozen=True)
class RootSolveReport:
    """Outcome of a Newton-Raphson solve.

    ``converged`` implies ``final_residual_norm <= tol``. Non-convergence is
    reported here rather than raised, so the caller decides how to proceed.
    """

    solution: np.ndarray
    iterations: int
    final_residual_norm: float
    converged: bool


def _check_wls_inputs(design, response, weights):
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if design.ndim != 2:
        raise DimensionMismatch(f"design must be 2-d, got shape {design.shape}")
    n = design.shape[0]
    if response.shape != (n,):
        raise DimensionMismatch(
            f"response length {response.shape} does not match {n} design rows"
        )
    if weights is None:
        weights = np.ones(n)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (n,):
            raise DimensionMismatch("weights length does not match design rows")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
    return design, response, weights


def wls_multi(
    design: np.ndarray,
    responses: np.ndarray,
    weights: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted least squares of several responses on one design.

    Shares a single pivoted QR factorization; ``responses`` is (n, t).
    Returns (coefficients (p, t), residuals (n, t)).
    """
    sw = np.sqrt(weights)
    q, r, piv = scipy.linalg.qr(design * sw[:, None], mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0 or np.any(diag < RANK_RTOL * diag[0]):
        raise RankDeficient("weighted Gram matrix is numerically singular")
    coef_piv = scipy.linalg.solve_triangular(r, q.T @ (responses * sw[:, None]))
    coef = np.empty_like(coef_piv)
    coef[piv] = coef_piv
    return coef, responses - design @ coef


def weighted_least_squares(
    design: np.ndarray,
    response: np.ndarray,
    weights: Optional[np.ndarray] = None,
) -> LinearFit:
    """Minimize sum_i w_i (y_i - x_i'b)^2 over b.

    Solved via pivoted QR on the sqrt-weight-scaled design; rank deficiency
    (relative pivot below ``RANK_RTOL`` of the largest) raises RankDeficient.
    """
    design, response, weights = _check_wls_inputs(design, response, weights)
    coef, resid = wls_multi(design, response[:, None], weights)
    return LinearFit(
        coefficients=coef[:, 0], residuals=resid[:, 0], design_rank=design.shape[1]
    )


def expit(eta: np.ndarray) -> np.ndarray:
    """Numerically stable inverse logit."""
    return scipy.special.expit(eta)


def irls_logistic(
    design: np.ndarray,
    response: np.ndarray,
    weights: Optional[np.ndarray] = None,
    tol: float = IRLS_TOL,
    max_iter: int = 100,
    coef_cap: float = SEPARATION_CAP,
) -> LinearFit:
    """Weighted Bernoulli-logit maximum likelihood via Fisher scoring.

    The returned coefficients satisfy ``max |X' W (y - expit(Xb))| <= tol``.
    A coefficient exceeding ``coef_cap`` in magnitude raises
    SeparationDetected (the fit is diverging).
    """
    design, response, weights = _check_wls_inputs(design, response, weights)
    if np.any((response != 0.0) & (response != 1.0)):
        raise ValueError("logistic response must be coded 0/1")

    # Normalize weights to mean one so the absolute score tolerance is
    # meaningful regardless of the caller's weight scale; the maximizer is
    # unchanged.
    wbar = float(np.mean(weights))
    if wbar <= 0:
        raise ValueError("weights must have positive sum")
    wn = weights / wbar

    coef = np.zeros(design.shape[1])
    score_norm = np.inf
    for _ in range(max_iter):
        mu = expit(design @ coef)
        score = design.T @ (wn * (response - mu))
        score_norm = float(np.max(np.abs(score)))
        if score_norm <= tol:
            return LinearFit(
                coefficients=coef,
                residuals=response - mu,
                design_rank=design.shape[1],
            )
        irls_w = wn * mu * (1.0 - mu)
        gram = design.T @ (design * irls_w[:, None])
        try:
            step = scipy.linalg.solve(gram, score, assume_a="pos")
        except scipy.linalg.LinAlgError as exc:
            raise RankDeficient("IRLS working Gram matrix is singular") from exc
        # Halve the step until the score norm improves; guards oscillation.
        alpha = 1.0
        for _ in range(MAX_HALVINGS):
            trial = coef + alpha * step
            trial_score = design.T @ (wn * (response - expit(design @ trial)))
            if np.max(np.abs(trial_score)) < score_norm:
                break
            alpha *= 0.5
        coef = coef + alpha * step
        if np.max(np.abs(coef)) > coef_cap:
            raise SeparationDetected(
                f"coefficient magnitude exceeded {coef_cap}; data may be separated"
            )
    raise NonConvergence("IRLS did not converge", residual_norm=score_norm)


def _finite_difference_jacobian(residual_fn, x, fx):
    n = x.size
    jac = np.empty((fx.size, n))
    for j in range(n):
        h = max(1e-6, 1e-6 * abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (residual_fn(xp) - residual_fn(xm)) / (2.0 * h)
    return jac


def newton_solve(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    start: np.ndarray,
    jacobian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    tol: float = NEWTON_TOL,
    max_iter: int = 50,
) -> RootSolveReport:
    """Damped Newton-Raphson for ``residual_fn(x) = 0``.

    Full steps are halved (up to ``MAX_HALVINGS`` times) whenever they fail
    to reduce the max-norm of the residual. Without ``jacobian_fn``, central
    finite differences with step ``max(1e-6, 1e-6 |x_j|)`` are used.

    Returns a RootSolveReport; non-convergence sets ``converged=False``
    instead of raising. A singular Jacobian raises SingularJacobian.
    """
    x = np.atleast_1d(np.asarray(start, dtype=float)).copy()
    fx = np.atleast_1d(np.asarray(residual_fn(x), dtype=float))
    if fx.shape != x.shape:
        raise DimensionMismatch(
            f"residual dimension {fx.shape} does not match start {x.shape}"
        )
    norm = float(np.max(np.abs(fx)))
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return RootSolveReport(x, it - 1, norm, True)
        jac = (
            np.atleast_2d(jacobian_fn(x))
            if jacobian_fn is not None
            else _finite_difference_jacobian(lambda v: np.atleast_1d(residual_fn(v)), x, fx)
        )
        try:
            step = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian("Newton Jacobian is singular") from exc
        if not np.all(np.isfinite(step)):
            raise SingularJacobian("Newton step is not finite")
        alpha = 1.0
        for _ in range(MAX_HALVINGS):
            trial = x + alpha * step
            ftrial = np.atleast_1d(residual_fn(trial))
            trial_norm = float(np.max(np.abs(ftrial)))
            if trial_norm < norm or trial_norm <= tol:
                break
            alpha *= 0.5
        x = x + alpha * step
        fx = np.atleast_1d(residual_fn(x))
        norm = float(np.max(np.abs(fx)))
    return RootSolveReport(x, max_iter, norm, bool(norm <= tol))
