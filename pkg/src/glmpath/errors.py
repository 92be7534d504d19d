"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class GlmPathError(Exception):
    """Base class for all glmpath errors."""


class FormatError(GlmPathError, ValueError):
    """Input file or in-memory data does not match the expected layout."""


class DivergenceError(GlmPathError, ArithmeticError):
    """The solver produced non-finite coefficients."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class PreconditionError(GlmPathError, ValueError):
    """An operation was called on inputs violating its preconditions."""
