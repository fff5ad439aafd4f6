"""Exception types shared across the package."""


class TwistboxError(Exception):
    """Base class for all package-specific errors."""


class DomainError(TwistboxError):
    """A point is not a valid point of the model it was used with."""


class ZeroVector(TwistboxError):
    """A direction was requested from a (numerically) zero vector."""


class SingularMap(TwistboxError):
    """A linear map required to be invertible is numerically singular."""


class NotHyperbolic(TwistboxError):
    """The torus automorphism has |trace| <= 2 (or is otherwise unusable)."""


class NotUnimodular(TwistboxError):
    """The torus automorphism does not have determinant one."""


class IntegrationError(TwistboxError):
    """The flow integrator failed (e.g. could not locate a roof crossing)."""


class BadCollar(TwistboxError):
    """The requested collar half-width does not fit the chart."""


class OutsideBox(TwistboxError):
    """A flow-box operation was applied to a point outside the box."""


class ZeroClass(TwistboxError):
    """A twist path was requested for the homotopically trivial class."""


class TransversalityFail(TwistboxError):
    """A construction required a transversality certificate that FAILed."""


class MissingSplitting(TwistboxError):
    """An operation needs an invariant splitting that is not available."""


class CapExceeded(TwistboxError):
    """The composition planner hit its exponent cap without converging."""


class SplittingEstimationFailed(TwistboxError):
    """Power iteration for an invariant bundle did not converge."""


class NoConvergence(TwistboxError):
    """An iterative solver stopped without reaching its tolerance.

    Carries the residual/angle history in ``history`` when available.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class DegenerateLinearization(TwistboxError):
    """A block pivot in the shadowing linear solve fell below threshold."""


class NonTermination(TwistboxError):
    """Greedy fundamental-domain reduction exceeded its step guard."""
