"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration or precondition violation detected before computing."""


class DomainError(ValueError):
    """Arguments outside the mathematical domain of an operation (e.g. |v| >= 1)."""


class InversionError(RuntimeError):
    """Newton inversion of the momentum map failed to converge.

    Carries the residual trace so callers can diagnose the failure.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals or [])
