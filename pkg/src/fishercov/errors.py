"""Exception hierarchy shared by every module in the package."""


class CovTestError(Exception):
    """Base class for all errors raised by fishercov."""


class DomainError(CovTestError, ValueError):
    """An argument lies outside the domain of a distribution function."""


class InsufficientDataError(CovTestError, ValueError):
    """Too few observations for the requested estimator."""


class DimensionError(CovTestError, ValueError):
    """Two samples disagree in dimension, or the dimension is unsupported."""


class DegenerateDataError(CovTestError, ValueError):
    """The data carry no variation the statistic can be normalised by."""


class DegenerateVariableError(DegenerateDataError):
    """A single variable is constant, so its standardisation is undefined."""

    def __init__(self, column, name=None):
        self.column = column
        self.name = name
        label = f"{column}" if name is None else f"{column} ({name})"
        super().__init__(f"variable {label} is constant; its variance estimate is zero")


class FactorizationError(CovTestError, ArithmeticError):
    """Cholesky factorization hit a non-positive pivot."""

    def __init__(self, pivot):
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite: pivot {pivot} is not positive")


class ConvergenceError(CovTestError, ArithmeticError):
    """An iterative solver stopped at its iteration cap."""

    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"no convergence after {iterations} iterations (residual {residual:.3e})"
        )


class SpecError(CovTestError, ValueError):
    """A covariance-model description is invalid."""


class InvalidPValueError(CovTestError, ValueError):
    """A p-value lies outside [0, 1]."""


class UsageError(CovTestError, ValueError):
    """An unknown option or method tag was requested."""


class McAbortError(CovTestError, RuntimeError):
    """Too many Monte Carlo replications failed within one cell."""
