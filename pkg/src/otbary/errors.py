"""Exception hierarchy shared across the package.

Validation errors signal bad user input (malformed configs, non-SPD
matrices, weight vectors that do not sum to one).  Numerical errors
signal that a computation went wrong on valid input (non-finite loss,
ill-conditioned matrix, iteration that failed to converge).  The CLI
maps the two families to distinct exit codes.
"""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class ConfigError(ValidationError):
    """Config file is malformed: unknown key, bad type, missing field."""


class NumericalError(RuntimeError):
    """Computation produced non-finite values or lost conditioning."""


class ConditioningError(NumericalError):
    """Matrix is too close to singular for the requested operation."""


class IterationError(NumericalError):
    """Iterative solve exhausted its budget before reaching tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
