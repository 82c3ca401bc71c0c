"""Exception types raised by the bsep solvers.

All exceptions derive from :class:`BsepError` so callers can catch the
whole family at once.  Breakdown-type errors carry enough context (the
failing column or step) to diagnose where a factorization died.
"""


class BsepError(Exception):
    """Base class for all bsep errors."""


class DimensionMismatch(BsepError):
    """Operands have incompatible shapes."""


class StructureViolation(BsepError):
    """A matrix does not carry the claimed block structure within tolerance."""


class OddLength(BsepError):
    """A vector that must have even length does not."""


class SizeLimitExceeded(BsepError):
    """A dense expansion was requested above the configured size cap."""


class IsotropicVector(BsepError):
    """a^H J a vanishes; no Householder-like transform exists for this vector."""


class NoValidPivot(BsepError):
    """No index r with j_r * (a^H J a) > 0 exists in the working slice."""


class HyperbolicBreakdown(BsepError):
    """|alpha| = |beta| within tolerance; the hyperbolic rotation does not exist."""


class PrincipalMinorBreakdown(BsepError):
    """GammaQR elimination hit a breakdown, signalling a vanishing
    Pi^- leading principal minor (existence condition of the factorization)."""

    def __init__(self, msg, column=None, cause=None):
        super().__init__(msg)
        self.column = column
        self.cause = cause


class RankDeficient(BsepError):
    """Input matrix is numerically rank deficient."""


class MaxIterationsExceeded(BsepError):
    """Iteration budget exhausted before convergence."""


class NoConvergence(BsepError):
    """An iterative refinement failed to reach its residual target."""


class FactorizationFailure(BsepError):
    """A shifted operator could not be factorized (shift too close to the spectrum)."""


class IsotropicStart(BsepError):
    """Starting vector has non-positive or negligible q^H Gamma0 q."""


class SmallSolveFailure(BsepError):
    """The projected small eigenproblem could not be solved."""


class EmptyState(BsepError):
    """Operation requires at least one completed Lanczos step."""


class ZeroReference(BsepError):
    """Relative error against a zero reference eigenvalue is undefined."""


class ZeroVector(BsepError):
    """A nonzero vector is required."""


class UnpairedEigenvalue(BsepError):
    """Spectrum pairing left a defect above tolerance."""


class ConvergenceFailure(BsepError):
    """The reference dense eigensolver failed to reach oracle accuracy."""


class ParseError(BsepError):
    """Matrix Market input is malformed."""

    def __init__(self, msg, line=None):
        if line is not None:
            msg = "line %d: %s" % (line, msg)
        super().__init__(msg)
        self.line = line


class UnsupportedField(BsepError):
    """Matrix Market field type not supported (e.g. pattern)."""


class InvalidSpec(BsepError):
    """Problem generator specification is invalid."""


class BsepNumericalWarning(UserWarning):
    """Warns about numerically delicate situations (near-breakdown cancellation)."""
