"""Exception types shared across the package."""


class WbpError(Exception):
    """Base class for all package errors."""


class ParameterError(WbpError, ValueError):
    """An argument is outside its documented domain."""


class StructuralError(WbpError):
    """A matrix, graph or code does not have the required structure."""


class FeasibilityError(WbpError):
    """The requested computation is too large to run exhaustively."""


class AlistError(WbpError, ValueError):
    """Malformed alist input. ``lineno`` is 1-based (0 when unknown)."""

    def __init__(self, message, lineno=0):
        self.lineno = lineno
        prefix = f"line {lineno}: " if lineno else ""
        super().__init__(prefix + message)


class NumericError(WbpError, FloatingPointError):
    """A non-finite value appeared during decoding or training."""

    def __init__(self, message, iteration=None, step=None, name=None):
        self.iteration = iteration
        self.step = step
        self.name = name
        super().__init__(message)
