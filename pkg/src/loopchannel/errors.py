"""Exception hierarchy shared by all modules."""


class LoopChannelError(Exception):
    """Base class for errors raised by this package."""


class DomainError(LoopChannelError, ValueError):
    """A function was evaluated outside the region where it is defined."""


class ParameterError(LoopChannelError, ValueError):
    """Invalid configuration or model parameter."""


class DataError(LoopChannelError, ValueError):
    """Input data is unusable (too short, flat, malformed)."""


class FitQualityError(LoopChannelError):
    """Data is readable, but the expected feature could not be found in it."""


class ConvergenceError(LoopChannelError):
    """No optimizer start converged.

    ``diagnostics`` holds one dict per start.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])
