"""Exception types raised across the toolkit."""


class QlqrError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(QlqrError):
    """Operands have inconsistent shapes for the requested operation."""


class DiscretizationError(QlqrError):
    """Bilinear discretization is ill-posed for the given sample time."""


class ControllabilityError(QlqrError):
    """The (A, B) pair fails the controllability rank check."""


class ExcitationError(QlqrError):
    """Collected data is not rich enough to identify the quadratic form."""


class ConvergenceError(QlqrError):
    """An iterative solve exceeded its iteration cap.

    Carries ``residuals``, the history of the quantity that failed to
    contract, so callers can diagnose or retry with a larger cap.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


class DivergenceError(QlqrError):
    """Iterates or rollout states grew without bound (non-stabilizing policy)."""


class ImprovementError(QlqrError):
    """Policy improvement is blocked: the input-input block is not positive definite."""


class UnsupportedConfigError(QlqrError):
    """The requested option combination is outside the supported configuration."""


class ConfigError(QlqrError):
    """An experiment configuration failed validation; message names the field."""
