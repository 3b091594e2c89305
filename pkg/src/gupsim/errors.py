"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the physically meaningful domain."""


class ConfigError(ValueError):
    """A configuration (file, integrator setting, estimator setting) is invalid."""


class NumericalError(RuntimeError):
    """An iterative numerical procedure failed to converge."""


class DivergenceError(NumericalError):
    """A trajectory left the stable regime (non-finite values or runaway cavity field)."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class FitError(ValueError):
    """Least-squares input is degenerate."""


class ProtocolError(RuntimeError):
    """The measurement protocol could not produce enough usable points."""
