"""Exception types shared across the toolkit."""


class ErgodicLimitsError(Exception):
    """Base class for all toolkit errors."""


class DomainError(ErgodicLimitsError):
    """A point lies outside the domain of the map it was fed to."""


class UnsupportedMapError(ErgodicLimitsError):
    """The requested construction is not available for this map family."""


class TruncationError(ErgodicLimitsError):
    """A truncated structure (branch partition, series) lost too much mass."""


class ConvergenceError(ErgodicLimitsError):
    """An iterative computation failed to converge within its budget."""


class InsufficientDataError(ErgodicLimitsError):
    """A Monte Carlo estimate did not stabilise at the requested accuracy."""


class DegenerateVarianceError(ErgodicLimitsError):
    """The asymptotic variance is (numerically) zero, e.g. for a coboundary."""


class BlowupError(ErgodicLimitsError):
    """A simulated trajectory left the admissible region."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigError(ErgodicLimitsError):
    """An experiment configuration failed validation."""
