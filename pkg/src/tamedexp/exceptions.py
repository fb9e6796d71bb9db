"""Exception types raised by tamedexp."""


class InvalidInputError(ValueError):
    """Raised when arguments fail shape, finiteness or consistency checks."""


class NonCommutingError(InvalidInputError):
    """Raised when the linear drift and noise matrices do not commute."""

    def __init__(self, violations):
        self.violations = list(violations)
        pairs = ", ".join(f"{p}: {n:.3e}" for p, n in self.violations)
        super().__init__(f"matrices do not commute ({pairs})")


class EstimationFailedError(RuntimeError):
    """Raised when a Monte Carlo estimate has too few finite samples."""

    def __init__(self, message, n_discarded):
        self.n_discarded = n_discarded
        super().__init__(f"{message} (discarded {n_discarded} non-finite samples)")


class FitUndefinedError(ValueError):
    """Raised when a convergence rate cannot be fitted."""


class ConfigError(ValueError):
    """Raised for malformed experiment configuration files."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
