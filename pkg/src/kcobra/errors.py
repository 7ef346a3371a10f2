"""Exception types shared across the package."""


class KcobraError(Exception):
    pass


class InvalidCombinationError(KcobraError, ValueError):
    """A kernel was paired with a bandwidth parametrization it does not support."""


class NotDifferentiableError(KcobraError, ValueError):
    """Analytic h-derivative requested for a kernel that has none."""


class ConfigError(KcobraError, ValueError):
    pass


class DivergedError(KcobraError, RuntimeError):
    """Gradient descent produced a non-finite objective or gradient.

    The partial trace is kept on ``self.trace`` so the run can be inspected.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class RunFailedError(KcobraError, RuntimeError):
    """Too many replications failed during an experiment."""
