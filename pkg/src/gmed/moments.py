"""Residual-product moment conditions for mediation G-estimation.

Per observation, with exposure residual ``ex = X - h(Z'gx)``, mediator
residual ``em = M - b1 X - Z'gm`` and outcome residual
``ey = Y - b2 M - b3 X - Z'gy`` (plus ``- th X M`` with interaction):

    U1 = ex * em        U2 = em * ey        U3 = ex * ey
    U4 = X * em * ey    (interaction system only)

Each moment carries its own nuisance copy (the augmented system): U1 uses
(gx1, gm1), U2 uses (gm2, gy1), U3 uses (gx2, gy2), and U4 shares U2's
copies. Under maximum-likelihood fitting both copies alias one value and the
standard three-moment system is recovered.

Weighted averaging convention everywhere: E_n[.] = sum(w * .) / sum(w).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, ModelConfig
from .exceptions import DegenerateCovariance, DimensionMismatch, InteractionDisabled
from .linalg import expit

GAMMA_BLOCKS = ("x1", "x2", "m1", "m2", "y1", "y2")


@dataclass(frozen=True)
class TargetParams:
    """Structural parameters: exposure->mediator (beta1), mediator->outcome
    (beta2), direct exposure->outcome (beta3), optional exposure-mediator
    interaction (theta)."""

    beta1: float
    beta2: float
    beta3: float
    theta: Optional[float] = None

    @property
    def k(self) -> int:
        return 3 if self.theta is None else 4

    def as_vector(self) -> np.ndarray:
        if self.theta is None:
            return np.array([self.beta1, self.beta2, self.beta3])
        return np.array([self.beta1, self.beta2, self.beta3, self.theta])

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "TargetParams":
        vec = np.asarray(vec, dtype=float)
        if vec.size == 3:
            return cls(vec[0], vec[1], vec[2])
        if vec.size == 4:
            return cls(vec[0], vec[1], vec[2], vec[3])
        raise DimensionMismatch(f"target parameter vector must have 3 or 4 entries, got {vec.size}")


@dataclass(frozen=True)
class NuisanceParams:
    """Confounder-model coefficients, one copy per moment equation.

    Blocks are ordered (x1, x2, m1, m2, y1, y2); all must share the
    confounder column count.
    """

    gamma_x1: np.ndarray
    gamma_x2: np.ndarray
    gamma_m1: np.ndarray
    gamma_m2: np.ndarray
    gamma_y1: np.ndarray
    gamma_y2: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.gamma_x1).size
        for name in GAMMA_BLOCKS:
            block = np.asarray(getattr(self, f"gamma_{name}"), dtype=float)
            if block.ndim != 1 or block.size != p:
                raise DimensionMismatch(
                    f"gamma_{name} must be a length-{p} vector to match gamma_x1"
                )
            object.__setattr__(self, f"gamma_{name}", block)

    @property
    def p(self) -> int:
        return self.gamma_x1.size

    def stacked(self) -> np.ndarray:
        return np.concatenate([getattr(self, f"gamma_{b}") for b in GAMMA_BLOCKS])

    @classmethod
    def from_stacked(cls, vec: np.ndarray, p: int) -> "NuisanceParams":
        vec = np.asarray(vec, dtype=float)
        if vec.size != 6 * p:
            raise DimensionMismatch(f"stacked nuisance vector must have {6 * p} entries")
        parts = [vec[i * p : (i + 1) * p] for i in range(6)]
        return cls(*parts)

    @classmethod
    def aliased(cls, gamma_x, gamma_m, gamma_y) -> "NuisanceParams":
        """Single-copy parameters duplicated into both slots (ML strategy)."""
        return cls(gamma_x, gamma_x, gamma_m, gamma_m, gamma_y, gamma_y)


@dataclass(frozen=True)
class MomentEvaluation:
    """Moment vector, per-row contributions, Jacobians and covariance.

    U_bar : (k,) weighted mean of per-row moments
    U_rows : (n, k) per-row moment values
    dU_dbeta : (k, k) weighted mean of dU/dbeta
    dU_dgamma : (k, 6p) weighted mean of dU/dgamma, blocks ordered as
        ``GAMMA_BLOCKS``
    I_hat : (k, k) weighted E_n[U U']
    """

    U_bar: np.ndarray
    U_rows: np.ndarray
    dU_dbeta: np.ndarray
    dU_dgamma: np.ndarray
    I_hat: np.ndarray


def exposure_mean_and_slope(eta: np.ndarray, family: str):
    """Inverse link h and its derivative h' at the linear predictor."""
    if family == "bernoulli-logit":
        mu = expit(eta)
        return mu, mu * (1.0 - mu)
    return eta, np.ones_like(eta)


def moment_covariance(U_rows: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted second-moment matrix E_n[U U'], symmetrized.

    Raises DegenerateCovariance when the smallest eigenvalue falls below
    -1e-8 relative to the largest (the matrix should be PSD by
    construction).
    """
    U_rows = np.asarray(U_rows, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if U_rows.shape[0] != weights.shape[0]:
        raise DimensionMismatch("weights length does not match moment rows")
    if U_rows.shape[0] < U_rows.shape[1]:
        raise DimensionMismatch("need at least as many rows as moment components")
    wsum = float(weights.sum())
    cov = (U_rows * weights[:, None]).T @ U_rows / wsum
    cov = 0.5 * (cov + cov.T)
    eigs = np.linalg.eigvalsh(cov)
    scale = max(1.0, float(eigs[-1]))
    if eigs[0] < -1e-8 * scale:
        raise DegenerateCovariance(
            f"moment covariance has negative eigenvalue {eigs[0]:.3e}"
        )
    return cov


def _check_dims(dataset: Dataset, gamma: NuisanceParams):
    if gamma.p != dataset.n_confounder_cols:
        raise DimensionMismatch(
            f"nuisance blocks have {gamma.p} coefficients but the dataset has "
            f"{dataset.n_confounder_cols} confounder columns"
        )


def _evaluate(dataset: Dataset, beta: TargetParams, gamma: NuisanceParams,
              config: ModelConfig, interaction: bool) -> MomentEvaluation:
    _check_dims(dataset, gamma)
    z = dataset.confounders
    x, m, y, w = dataset.exposure, dataset.mediator, dataset.outcome, dataset.weights
    wsum = float(w.sum())

    def en(v):
        return float(np.dot(w, v)) / wsum

    def en_rows(v):
        # weighted mean of v[:, None] * z over rows -> length-p vector
        return (w * v) @ z / wsum

    hx1, hslope1 = exposure_mean_and_slope(z @ gamma.gamma_x1, config.exposure_family)
    hx2, hslope2 = exposure_mean_and_slope(z @ gamma.gamma_x2, config.exposure_family)
    ex1 = x - hx1
    ex2 = x - hx2
    em1 = m - beta.beta1 * x - z @ gamma.gamma_m1
    em2 = m - beta.beta1 * x - z @ gamma.gamma_m2
    xm = x * m
    ey_core = y - beta.beta2 * m - beta.beta3 * x
    if interaction:
        ey_core = ey_core - beta.theta * xm
    ey1 = ey_core - z @ gamma.gamma_y1
    ey2 = ey_core - z @ gamma.gamma_y2

    k = 4 if interaction else 3
    n = dataset.n
    U = np.empty((n, k))
    U[:, 0] = ex1 * em1
    U[:, 1] = em2 * ey1
    U[:, 2] = ex2 * ey2
    if interaction:
        U[:, 3] = x * em2 * ey1

    kb = 4 if interaction else 3
    dU_dbeta = np.zeros((k, kb))
    dU_dbeta[0, 0] = en(-x * ex1)
    dU_dbeta[1, 0] = en(-x * ey1)
    dU_dbeta[1, 1] = en(-m * em2)
    dU_dbeta[1, 2] = en(-x * em2)
    dU_dbeta[2, 1] = en(-m * ex2)
    dU_dbeta[2, 2] = en(-x * ex2)
    if interaction:
        dU_dbeta[1, 3] = en(-xm * em2)
        dU_dbeta[2, 3] = en(-xm * ex2)
        dU_dbeta[3, 0] = en(-x * x * ey1)
        dU_dbeta[3, 1] = en(-xm * em2)
        dU_dbeta[3, 2] = en(-x * x * em2)
        dU_dbeta[3, 3] = en(-x * xm * em2)

    p = gamma.p
    dU_dgamma = np.zeros((k, 6 * p))
    blocks = {name: slice(i * p, (i + 1) * p) for i, name in enumerate(GAMMA_BLOCKS)}
    dU_dgamma[0, blocks["x1"]] = en_rows(-hslope1 * em1)
    dU_dgamma[0, blocks["m1"]] = en_rows(-ex1)
    dU_dgamma[1, blocks["m2"]] = en_rows(-ey1)
    dU_dgamma[1, blocks["y1"]] = en_rows(-em2)
    dU_dgamma[2, blocks["x2"]] = en_rows(-hslope2 * ey2)
    dU_dgamma[2, blocks["y2"]] = en_rows(-ex2)
    if interaction:
        dU_dgamma[3, blocks["m2"]] = en_rows(-x * ey1)
        dU_dgamma[3, blocks["y1"]] = en_rows(-x * em2)

    U_bar = (w @ U) / wsum
    I_hat = moment_covariance(U, w)
    return MomentEvaluation(
        U_bar=U_bar, U_rows=U, dU_dbeta=dU_dbeta, dU_dgamma=dU_dgamma, I_hat=I_hat
    )


def g_moments(dataset: Dataset, beta: TargetParams, gamma: NuisanceParams,
              config: ModelConfig) -> MomentEvaluation:
    """Evaluate the three-moment system with analytic Jacobians."""
    if beta.theta is not None:
        raise DimensionMismatch(
            "theta is set; use g_moments_interaction with interaction enabled"
        )
    return _evaluate(dataset, beta, gamma, config, interaction=False)


def g_moments_interaction(dataset: Dataset, beta: TargetParams, gamma: NuisanceParams,
                          config: ModelConfig) -> MomentEvaluation:
    """Evaluate the four-moment system including the interaction moment
    ``U4 = X * em * ey`` (no additional working models are required)."""
    if not config.interaction_enabled:
        raise InteractionDisabled("model config has interaction_enabled=False")
    if beta.theta is None:
        raise DimensionMismatch("interaction system requires beta.theta")
    return _evaluate(dataset, beta, gamma, config, interaction=True)
