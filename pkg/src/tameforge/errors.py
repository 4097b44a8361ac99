"""Exception types shared across the package."""


class TameforgeError(Exception):
    """Base class for every error raised by this package."""


class ParseError(TameforgeError):
    pass


class SpecMismatch(TameforgeError):
    """Operands belong to different ring specs or frames."""


class UndecidableEquality(TameforgeError):
    """An equality query could not be decided within the configured bound."""


class BoundExceeded(TameforgeError):
    """A bounded search ran out before reaching a decision."""


class NotADomain(TameforgeError):
    """Operation requires an integral domain."""


class NotQAlgebra(TameforgeError):
    """Division by an integer was required but impossible in this ring."""


class FrameMismatch(TameforgeError):
    """Polynomials live over different variable frames."""


class DimensionMismatch(TameforgeError):
    """Maps or words act on incompatible coordinate frames."""


class NotOriginPreserving(TameforgeError):
    pass


class UnsupportedHom(TameforgeError):
    """No ring homomorphism of the requested shape is available."""


class NotElementary(TameforgeError):
    """A generator was expected to be an elementary shear."""


class NotSquareZero(TameforgeError):
    """Coefficients were required to span a square-zero ideal but do not."""


class JacobianNotOne(TameforgeError):
    pass


class NotDivisible(TameforgeError):
    pass


class OrderBoundViolated(TameforgeError):
    """Pole orders exceed what an integrality argument allows."""


class NInsufficient(TameforgeError):
    """The supplied localization exponent N is too small.

    Carries the smallest sufficient exponent in ``required``.
    """

    def __init__(self, required: int, message: str = ""):
        self.required = required
        super().__init__(message or f"exponent N too small, need at least {required}")


class NotLocalOrField(TameforgeError):
    pass


class SingularMatrix(TameforgeError):
    pass


class NotAnAutomorphism(TameforgeError):
    pass


class NotArtinianSupported(TameforgeError):
    pass


class BaseFactorFailed(TameforgeError):
    """The supplied base-ring factorization oracle returned an unusable word."""


class LiftMismatch(TameforgeError):
    """A supplied word does not match the map it is claimed to reduce to."""


class HypothesisFailed(TameforgeError):
    """A stated precondition fails on the given data."""


class DepthCapExceeded(TameforgeError):
    pass


class ProductNotIdentity(TameforgeError):
    pass


class VerificationFailed(TameforgeError):
    """An internally produced certificate failed its own composition check."""
