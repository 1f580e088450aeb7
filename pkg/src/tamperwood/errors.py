"""Exception hierarchy shared across the toolkit."""


class TamperwoodError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(TamperwoodError):
    """Caller violated a precondition (bad argument, empty dataset, ...)."""


class ParseError(TamperwoodError):
    """A data file could not be parsed. Carries the offending row when known."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class SchemaError(TamperwoodError):
    """A file is well-formed but does not match the expected schema."""


class FormatError(TamperwoodError):
    """A model file violates the model-file schema or version contract."""


class ValidationError(TamperwoodError):
    """A knowledge document failed validation."""


class ConsistencyError(TamperwoodError):
    """A tree edit would create a trivial (unsatisfiable) path."""
