"""Exception hierarchy shared by every polaris module."""


class PolarisError(Exception):
    """Base class for all errors raised by polaris."""


class DimensionError(PolarisError, ValueError):
    """Shapes of the inputs do not line up."""


class DomainError(PolarisError, ValueError):
    """An input lies outside the domain of the operation."""


class InsufficientDataError(PolarisError, ValueError):
    """Too few rows to estimate the requested statistic."""


class ParseError(PolarisError, ValueError):
    """A matrix file could not be parsed."""

    def __init__(self, message, row=None, col=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if col is not None:
            where.append(f"col {col}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.col = col


class EmptySubsetError(PolarisError, ValueError):
    """Selecting variables by type left no columns."""


class SingularCovarianceError(PolarisError, ArithmeticError):
    """A covariance matrix is not positive definite even after jitter."""


class UndefinedMetricError(PolarisError, ValueError):
    """A metric is undefined on the selected columns.

    ``partial`` holds whatever could still be computed (for a single
    dimension only the effective rank survives).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DegenerateLabelsError(PolarisError, ValueError):
    """Labels contain a single class."""


class TrainingDivergedError(PolarisError, ArithmeticError):
    """The training loss became non-finite."""

    def __init__(self, step, message=None):
        super().__init__(message or f"non-finite loss at step {step}")
        self.step = step
