"""Exception hierarchy.

Every error raised by the library derives from :class:`HJError`, which lets
the command line map failures onto exit codes without string matching.
"""


class HJError(Exception):
    """Base class for library errors."""


# geometry
class PathNotFound(HJError):
    """No admissible polygonal path joins the two points inside the domain."""


class InvalidDomain(HJError):
    """Domain description is malformed (orientation, self intersection, ...)."""


# lagrangian
class NewtonDivergence(HJError):
    """The Legendre inversion did not reach its residual tolerance."""


class NotTonelli(HJError):
    """A Lagrangian fails the convexity or growth envelopes."""


class ExactnessViolated(HJError):
    """The velocity gradient at zero speed is not an exact differential."""


# action and potential
class InvalidTime(HJError):
    """Nonpositive or non-finite time horizon."""


class NotConverged(HJError):
    """Path optimizer exhausted its iteration budget."""


class ConstrainedEndpoint(HJError):
    """Endpoint gradient requested at a point where the path is constrained."""


class SupercriticalViolated(HJError):
    """The zero level is not strictly supercritical for this domain."""


# solver
class CompatibilityFailed(HJError):
    """Boundary data is incompatible with the Lagrangian."""

    def __init__(self, condition, message):
        super().__init__(f"{condition}: {message}")
        self.condition = condition


class RootNotBracketed(HJError):
    """No sign change was found for a scalar root search."""


class NoFeasibleCandidate(HJError):
    """Every boundary candidate failed to produce a converged potential."""


class FieldCorrupted(HJError):
    """A saved value field is unreadable or fails its checksum."""


# singular set
class BallTouchesBoundary(HJError):
    """The step maximizer's ball reaches the boundary."""


class AmbiguousMaximizer(HJError):
    """Two separated maximizers of the step functional tie."""


class ConditionMViolated(HJError):
    """Mechanical chain preconditions do not hold."""


class InvariantViolation(HJError):
    """A proven invariant failed numerically.

    ``kind`` names the violated invariant, e.g. ``"BoundaryHit"`` or
    ``"Monotonicity"``.
    """

    def __init__(self, kind, message=""):
        super().__init__(f"{kind}: {message}" if message else kind)
        self.kind = kind


class NotCutPoint(UserWarning):
    """A singular chain was started at a point that fails the cut test."""


# verify
class HypothesisUnmet(HJError):
    """A check's hypotheses are not satisfied by the scenario."""


class ConfigError(HJError):
    """Scenario file is malformed."""

    def __init__(self, message, line=None, column=None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.column = column
