"""Exception types shared across the package."""


class SplatStyleError(Exception):
    """Base class for all package errors."""


class ParseError(SplatStyleError):
    """Raised when a PLY file cannot be parsed.

    ``kind`` is one of ``"header"``, ``"truncated"`` or
    ``"unsupported_encoding"``.
    """

    def __init__(self, kind, message):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


class EmptySceneError(SplatStyleError):
    """Raised when an operation requires a non-empty scene."""


class InsufficientPointsError(SplatStyleError):
    """Raised when a point set is too small for the requested neighborhood."""


class InvalidArgumentError(SplatStyleError, ValueError):
    """Raised when an argument is outside its documented range."""


class ShapeError(SplatStyleError):
    """Raised when array shapes do not match an operation's contract."""


class WeightError(SplatStyleError):
    """Raised when a named tensor cannot be resolved from a weight store."""


class ManifestError(SplatStyleError):
    """Raised when a network manifest is inconsistent or violated."""


class NumericError(SplatStyleError):
    """Raised when non-finite values reach a numeric operation."""
