"""Exception hierarchy shared by all windcast modules.

The CLI maps each family to its own exit code, so raise the most specific
class that fits.
"""


class WindcastError(Exception):
    """Base class for all toolkit errors."""


class ArgumentError(WindcastError, ValueError):
    """Invalid parameter value or shape (caller's fault)."""


class DataError(WindcastError):
    """Input data cannot be used as given."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyInputError(DataError):
    pass


class GapError(DataError):
    pass


class SplitError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class EmbeddingError(DataError):
    pass


class SelectionError(WindcastError):
    """No lag satisfies the selection rule within the evaluated curve."""


class ForecastError(WindcastError):
    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)


class FormatError(DataError):
    """Serialized artifact is malformed or has an unsupported version."""


class ConvergenceWarning(UserWarning):
    """Solver stopped at its iteration bound before meeting tolerance."""
