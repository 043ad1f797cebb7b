"""Exception types raised across the package."""


class ChordixError(Exception):
    """Base class for all package errors."""


class EmptyBody(ChordixError):
    pass


class RejectionOverflow(ChordixError):
    pass


class SharedBoundary(ChordixError):
    pass


class DuplicateId(ChordixError):
    pass


class ParseError(ChordixError):
    pass


class UnsupportedOverlapChain(ChordixError):
    pass


class NegativeValue(ChordixError):
    pass


class BinningMismatch(ChordixError):
    pass


class OverlappingScene(ChordixError):
    pass


class ZeroMass(ChordixError):
    pass


class QuadratureFailure(ChordixError):
    pass


class SingularDiagonal(ChordixError):
    pass


class UnsupportedGeometry(ChordixError):
    pass


class BinningWarning(UserWarning):
    pass


class SharedStreamWarning(UserWarning):
    pass
