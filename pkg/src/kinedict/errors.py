"""Exception hierarchy shared across the package."""


class KinedictError(Exception):
    """Base class for all package errors."""


class InvalidInputError(KinedictError, ValueError):
    """Raised when an argument violates a documented precondition."""


class DegenerateCombinationError(KinedictError, ArithmeticError):
    """A convex combination of quaternions cancelled to (near) zero length."""


class UnderConstrainedError(KinedictError, ValueError):
    """Too few observations to pin down a pose fit."""


class DataError(KinedictError):
    """A data file could not be parsed.

    ``line`` and ``column`` are 1-based and may be None when not applicable.
    """

    def __init__(self, message, path=None, line=None, column=None):
        loc = ""
        if path is not None:
            loc = str(path)
        if line is not None:
            loc += f":{line}"
            if column is not None:
                loc += f":{column}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line
        self.column = column


class NumericError(KinedictError, ArithmeticError):
    """A numerical routine produced non-finite values."""
