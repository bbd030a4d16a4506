"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class DataError(ValueError):
    """Input data cannot be used (NaN residuals, too few points, ...)."""


class ParseError(DataError):
    """A text record could not be parsed.

    ``line`` is the 1-based line number of the offending line, or ``None``
    when the error is not tied to a single line.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaVersionError(ParseError):
    """A results record carries a schema version this reader does not know."""
