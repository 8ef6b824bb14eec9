"""Exception types shared across the package."""


class MsgenError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(MsgenError, ValueError):
    """An operation received arguments violating its preconditions."""


class ParseError(MsgenError, ValueError):
    """A file or document could not be parsed.

    Carries enough context (path, line, field) to point at the offending
    location.
    """

    def __init__(self, message: str, *, path: str | None = None,
                 line: int | None = None, field: str | None = None):
        parts = []
        if path is not None:
            parts.append(str(path))
        if line is not None:
            parts.append(f"line {line}")
        if field is not None:
            parts.append(f"field {field!r}")
        prefix = ": ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.line = line
        self.field = field


class VersionError(ParseError):
    """A serialized document declares an unsupported format_version."""


class NonFiniteError(MsgenError, FloatingPointError):
    """A numeric operation produced NaN or Inf."""
