"""Exception hierarchy shared by all spinldp modules."""


class SpinLDPError(Exception):
    """Base class for all spinldp errors."""


class DomainError(SpinLDPError):
    """An operation was called outside its domain (bad support, bad range, ...)."""


class CapExceededError(SpinLDPError):
    """A dense window would exceed the hard dimension cap."""


class ConvergenceError(SpinLDPError):
    """An iterative solver failed to converge; carries the residual history."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


class InvariantViolation(SpinLDPError):
    """A numeric contract that should hold for valid inputs was broken."""


class ConfigError(SpinLDPError):
    """A run configuration failed validation."""

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems) if problems is not None else []
