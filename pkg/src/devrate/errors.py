"""Exception hierarchy shared by every module."""


class DevrateError(Exception):
    """Base class for all library errors."""


class ConfigurationError(DevrateError, ValueError):
    """Invalid kernel, model, schedule or experiment configuration."""


class InputError(DevrateError, ValueError):
    """Malformed data passed to an estimator or rate evaluation."""


class NumericError(DevrateError, ArithmeticError):
    """A numerical routine failed to reach its tolerance.

    ``estimate`` carries the residual or error estimate at failure.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class DivergenceError(NumericError):
    """A quantity that must stay finite diverges (e.g. regular-variation sums)."""


class IndeterminateRateError(NumericError):
    """Conjugate optimisation stopped without convergence or divergence certificate."""


class InsufficientDataError(DevrateError, RuntimeError):
    """Too few usable Monte Carlo replications."""
