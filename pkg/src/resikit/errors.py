"""Exception types raised across the package.

Each class marks a distinct failure mode so callers can react selectively
(e.g. the bootstrap redraws a replicate on ``FitError`` subclasses but
propagates configuration mistakes).
"""


class ResikitError(Exception):
    """Base class for all package errors."""


class SchemaError(ResikitError):
    """Input table does not match the requested terms (missing column, bad coding)."""


class DegenerateDesignError(ResikitError):
    """A non-intercept column is constant, so the design cannot identify its term."""


class KnotPlacementError(ResikitError):
    """Spline knots collide (ties in the predictor) or too few distinct values."""


class UnknownTermError(ResikitError):
    """A tested term is not present in the design (or the tested set is empty)."""


class FitError(ResikitError):
    """Base class for model-fitting failures."""


class SingularSystemError(FitError):
    """Design matrix is rank deficient; normal equations cannot be solved."""


class SeparationError(FitError):
    """Logistic fit diverged or produced fitted probabilities at 0/1."""


class UnsupportedFlavorError(ResikitError):
    """Requested meat flavor is not defined for the model family."""


class IllConditionedError(ResikitError):
    """A matrix that must be inverted is numerically singular."""


class SignedUndefinedError(ResikitError):
    """Signed effect sizes exist only for single-parameter hypotheses."""


class InsufficientDfError(ResikitError):
    """F/t-based estimators need n > m + 2 residual degrees of freedom."""


class BoundaryGradientError(ResikitError):
    """Unsigned effect size is at the boundary; its gradient is undefined."""


class BootstrapInstabilityError(ResikitError):
    """More than 10% of bootstrap replicates failed to refit."""


class SolverError(ResikitError):
    """Root finding failed to bracket a solution."""


class DegenerateGroupsError(ResikitError):
    """Groups have zero pooled variance; standardized differences are undefined."""


class ParameterError(ResikitError):
    """An argument is outside its documented range (e.g. alpha not in (0,1))."""


class ConfigError(ResikitError):
    """A CLI or grid-file configuration value is invalid."""
