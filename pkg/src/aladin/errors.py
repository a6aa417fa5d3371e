"""Exception hierarchy shared across the toolkit."""


class AladinError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(AladinError):
    """Dimension mismatch between problem data and supplied arrays."""


class OracleError(AladinError):
    """A user-supplied oracle returned non-finite or mis-shaped output."""


class NumericalError(AladinError):
    """Non-finite values entered a numerical update."""


class DomainError(AladinError):
    """Argument outside the documented domain of an operation."""


class SolveStalled(AladinError):
    """Line search in the local Newton solver fell below the minimum step.

    Carries the best iterate seen so far (a LocalSolution with
    converged=False) so callers such as the runtime can continue.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NotPositiveDefinite(AladinError):
    """A matrix required to be SPD failed its Cholesky factorization."""


class RankDeficientConstraints(AladinError):
    """Constraint Jacobian block is (numerically) row rank deficient."""


class CoordinationSingular(AladinError):
    """The coordination system is singular."""

    def __init__(self, message, cond_estimate=None):
        super().__init__(message)
        self.cond_estimate = cond_estimate


class MeasurementSingular(AladinError):
    """Range-bearing measurement evaluated at the origin."""


class LayoutError(AladinError):
    """Horizon split produced an invalid sub-window layout."""
