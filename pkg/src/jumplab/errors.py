"""Exception types raised by the simulation and grid machinery."""


class JumplabError(Exception):
    """Base class for all errors raised by this package."""


class InvalidGrid(JumplabError):
    """Time or space grid specification is unusable (bad step, bounds, or node collision)."""


class NumericalBlowup(JumplabError):
    """A state, field, or Jacobian became non-finite during evolution."""

    def __init__(self, message, t=None, x=None):
        super().__init__(message)
        self.t = t
        self.x = x


class DerivativeUnavailable(JumplabError):
    """A required derivative has no analytic callback and finite differencing was disabled."""


class ContextMismatch(JumplabError):
    """Objects passed to a check do not share the coefficients/noise they are required to share."""


class InverseMapDiverged(JumplabError):
    """Newton iteration for the pre-jump state failed to reach the residual target."""


class UniquenessDomainViolated(JumplabError):
    """The jump map's contraction bound fails on the search region, so the inverse may not be unique."""


class NonInvertibleJumpFlow(JumplabError):
    """det(I + dg/dx) <= 0 at a jump: the per-jump state map is not orientation-preserving invertible."""


class StabilityBoundViolated(JumplabError):
    """Explicit-scheme step size violates the stability bound for the given coefficients and grid."""


class SupportOverflow(JumplabError):
    """Density support reached the truncated boundary; the zero boundary condition is no longer harmless."""


class ConfigError(JumplabError):
    """A scenario configuration failed to parse or validate; the message names the offending field."""
