"""Exception hierarchy for gmed.

Numerical failures are reported through dedicated exception types so callers
(and the CLI exit-code contract) can distinguish input errors from
non-convergence.
"""


class GmedError(Exception):
    """Base class for all gmed errors."""


# --- input / data errors ---------------------------------------------------


class MissingColumn(GmedError):
    """A mapped CSV column does not exist in the file header."""


class NonNumericCell(GmedError):
    """A CSV cell could not be parsed as a number."""

    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"non-numeric value {value!r} in column {column!r}, row {row}")


class EmptyAfterFiltering(GmedError):
    """No rows remain after applying the missing-data policy."""


class ConstantColumn(GmedError):
    """A non-intercept confounder column has zero variance."""


class DimensionMismatch(GmedError):
    """Array shapes or parameter-block dimensions are inconsistent."""


class InteractionDisabled(GmedError):
    """Interaction moments requested but the model config disables them."""


# --- numerical errors ------------------------------------------------------


class RankDeficient(GmedError):
    """Weighted Gram matrix is singular beyond the pivot tolerance."""


class SeparationDetected(GmedError):
    """Logistic fit diverged; data are (quasi-)separated."""


class NonConvergence(GmedError):
    """Iterative scheme failed to reach tolerance."""

    def __init__(self, message: str, residual_norm: float | None = None):
        self.residual_norm = residual_norm
        if residual_norm is not None:
            message = f"{message} (final residual norm {residual_norm:.3e})"
        super().__init__(message)


class SingularJacobian(GmedError):
    """Newton step could not be computed; Jacobian numerically singular."""


class DegenerateCovariance(GmedError):
    """Moment covariance is rank deficient or indefinite."""


class SingularWeight(GmedError):
    """GMM weight matrix is not invertible."""


class ZeroResidualVariance(GmedError):
    """Mediator residuals are identically zero; weighted average undefined."""


class ZeroDenominator(GmedError):
    """Variance denominator of a Wald statistic is zero."""


class OrthogonalityRequired(GmedError):
    """CUE score test needs orthogonally (bias-reduced) estimated nuisances."""


class TooManyFailures(GmedError):
    """More than 5% of bootstrap replicates failed to converge."""

    def __init__(self, failures: int, replicates: int):
        self.failures = failures
        self.replicates = replicates
        super().__init__(
            f"{failures}/{replicates} bootstrap replicates failed (> 5% threshold)"
        )
