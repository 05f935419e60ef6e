class RawHDRError(Exception):
    """Base class for package errors."""


class ShapeError(RawHDRError, ValueError):
    pass


class InvalidProfileError(RawHDRError, ValueError):
    pass


class NumericalError(RawHDRError, FloatingPointError):
    pass


class FormatError(RawHDRError, ValueError):
    """Malformed or version-mismatched file."""
