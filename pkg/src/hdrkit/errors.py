"""Exception taxonomy shared across the toolkit.

Each error type carries a short machine-readable ``category`` that the CLI
uses for its ``error:<category>:`` prefix and exit-code mapping.
"""


class HdrkitError(Exception):
    """Base class for all toolkit errors."""

    category = "error"


class FormatError(HdrkitError):
    """Malformed container: bad magic, header line, or resolution spec."""

    category = "format"

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFormatError(HdrkitError):
    """Well-formed file using a feature this toolkit does not read."""

    category = "unsupported"


class TruncationError(HdrkitError):
    """Input ended before the declared amount of data."""

    category = "truncated"


class CorruptionError(HdrkitError):
    """Internally inconsistent data, e.g. an RLE run past the scanline end."""

    category = "corrupt"


class ParameterError(HdrkitError):
    """An argument value outside its documented domain."""

    category = "parameter"


class ValidationError(HdrkitError):
    """Data violating a structural invariant (shapes, ranges, monotonicity)."""

    category = "validation"


class UsageError(HdrkitError):
    """Bad command line: unknown subcommand, unknown flag, missing argument."""

    category = "usage"
