"""Exception types shared across the package."""


class RescompError(Exception):
    """Base class for all package errors."""


class InvalidInput(RescompError, ValueError):
    """Raised when an argument violates a documented precondition."""


class NotPositiveDefinite(RescompError):
    """Raised when a matrix required to be positive definite is not."""


class RankUnavailable(RescompError):
    """Raised when more residual components are requested than the data supports."""


class NoConvergence(RescompError):
    """Raised (or flagged) when an iterative solver exhausts its iteration budget."""


class ParseError(RescompError):
    """Raised when a saved artifact cannot be parsed."""


class FileIOError(RescompError):
    """Raised on file read/write failures; carries the offending path."""

    def __init__(self, path, message=""):
        self.path = str(path)
        super().__init__(f"{message or 'I/O failure'}: {self.path}")
