"""Exception hierarchy shared by all estimation modules."""


class OddsCalError(Exception):
    """Base class for estimation failures."""


class DegenerateAuxiliary(OddsCalError):
    """The auxiliary variable has too few distinct values to place knots."""


class DesignTooSmall(OddsCalError):
    """Variance estimation needs at least two sampled units."""


class SingularGram(OddsCalError):
    """The weighted Gram matrix of the calibration basis is rank deficient."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class SingularJacobian(OddsCalError):
    """The logistic Jacobian cannot be inverted."""


class Diverged(OddsCalError):
    """Newton iterations run off to infinity (data separation)."""


class NotConverged(OddsCalError):
    """Newton iterations hit the iteration cap."""


class ZeroCell(OddsCalError):
    """A contingency cell count is zero, so the odds ratio is not finite."""


class MonteCarloAborted(OddsCalError):
    """Too many Monte Carlo replicates failed."""
