"""Exception types shared across the holodyn modules.

Every domain error derives from :class:`HolodynError` and carries a
JSON-serializable payload so the CLI can emit machine-readable errors.
"""

from __future__ import annotations


class HolodynError(Exception):
    """Base class for domain errors."""

    def __init__(self, message: str = "", **payload):
        super().__init__(message or self.__class__.__name__)
        self.payload = payload

    def to_dict(self) -> dict:
        d = {"error": self.__class__.__name__, "detail": str(self)}
        d.update(self.payload)
        return d


class DimensionMismatch(HolodynError):
    pass


class OrderOutOfRange(HolodynError):
    pass


class SingularLinearPart(HolodynError):
    pass


class NotTriangular(HolodynError):
    pass


class ConditionViolation(HolodynError):
    """A hypothesis of the selective-elimination theorem fails on the truncation."""

    def __init__(self, which: str, witness, message: str = ""):
        super().__init__(message or f"{which} violated at {witness!r}",
                         which=which, witness=_jsonable(witness))
        self.which = which
        self.witness = witness


class SmallDivisor(HolodynError):
    def __init__(self, alpha, j, value=None):
        super().__init__(f"divisor below floor at alpha={alpha}, j={j}",
                         alpha=list(alpha), j=j, value=value)
        self.alpha = alpha
        self.j = j
        self.value = value


class ZeroDivisor(HolodynError):
    pass


class DecompositionIncomplete(HolodynError):
    pass


class InsufficientTruncation(HolodynError):
    pass


class IsIdentityIterate(HolodynError):
    pass


class NotTangentToIdentity(HolodynError):
    pass


class InfiniteOrder(HolodynError):
    pass


class UnsupportedDimension(HolodynError):
    pass


class DegenerateDirection(HolodynError):
    pass


class OriginPoint(HolodynError):
    pass


class OrbitEscaped(HolodynError):
    pass


class NotConverged(HolodynError):
    pass


class QuadratureNonConvergent(HolodynError):
    pass


class DegenerateAlongCenter(HolodynError):
    pass


class NotEigendirection(HolodynError):
    pass


class ZeroMultiplier(HolodynError):
    pass


def _jsonable(obj):
    if isinstance(obj, (list, tuple)):
        return [_jsonable(o) for o in obj]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj
