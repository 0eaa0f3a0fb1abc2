"""Exception types shared across the package."""


class SnlabError(Exception):
    """Base class for all package errors."""


class DomainError(SnlabError, ValueError):
    """Argument outside the declared domain (x not in [0,1], parameter out of range)."""


class SingularityError(SnlabError, ArithmeticError):
    """Evaluation at or too close to a singular point (e.g. Schwarzian at the critical point)."""


class NoConvergenceError(SnlabError, RuntimeError):
    """An iterative solver exhausted its step budget."""


class DegenerateSaddleNodeError(SnlabError, RuntimeError):
    """Fold located but the quadratic term is below tolerance."""


class OrientationError(SnlabError, RuntimeError):
    """The signed-parameter convention failed its validation check."""


class ContinuationLostError(SnlabError, RuntimeError):
    """Periodic-point continuation lost hyperbolicity along the parameter grid."""


class DisplacementSignError(SnlabError, RuntimeError):
    """Chart requested on the wrong side of the bifurcation (displacement changes sign)."""


class QuadratureNonMonotoneError(SnlabError, RuntimeError):
    """Phase quadrature produced a non-monotone fractional coordinate."""


class OutOfDomainError(SnlabError, ValueError):
    """Point outside a chart's coordinate domain."""


class BracketLossError(SnlabError, RuntimeError):
    """A bracketing root search could not maintain a sign change."""


class OrbitEscapeError(SnlabError, RuntimeError):
    """An orbit left the region where an operation is defined."""


class SampleEscapeError(SnlabError, RuntimeError):
    """A sampled point left its validity set and could not be resampled."""


class EmptyIntervalError(SnlabError, ValueError):
    """Interval operation on an empty interval."""


class ConfigError(SnlabError, ValueError):
    """Sweep configuration failed to parse or validate.

    ``problems`` lists every violation found, each tagged with the offending
    key or the line/column of the parse failure.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
