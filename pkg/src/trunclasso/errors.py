"""Exception types raised across the package."""


class TruncLassoError(Exception):
    """Base class for all package errors."""


class TruncationSetError(TruncLassoError, ValueError):
    """A truncation set string or interval list is malformed."""


class InvalidView(TruncLassoError, ValueError):
    """The truncated Gaussian has zero survival probability."""


class NumericalUnderflow(TruncLassoError, ArithmeticError):
    """Survival probability fell below the representable floor.

    ``row`` holds the offending sample index when raised from a
    likelihood evaluation.
    """

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ToleranceUnreachable(TruncLassoError, ValueError):
    """Requested tolerance is below double-precision resolution."""


class SurvivalTooLow(TruncLassoError):
    """Rejection sampling discarded too many draws."""


class SingularFactorization(TruncLassoError, ArithmeticError):
    """The design matrix factorization failed."""


class EmptyFeasibleSet(TruncLassoError, ValueError):
    """The residual ball contains no point."""


class MaxItersExceeded(TruncLassoError):
    """An iterative solver hit its iteration cap.

    Attributes
    ----------
    best : ndarray
        Best iterate found before stopping.
    gap : float
        Optimality measure at ``best`` (duality gap or gradient-map norm).
    """

    def __init__(self, message, best=None, gap=float("nan")):
        super().__init__(message)
        self.best = best
        self.gap = gap
