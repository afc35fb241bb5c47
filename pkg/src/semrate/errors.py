"""Exception hierarchy shared by all semrate modules.

Every data-dependent failure raises a subclass of :class:`SemrateError`,
so callers (and the CLI) can separate bad data from programming errors.
Wire-format parsers additionally guarantee totality: any byte string maps
to either a parsed value or a :class:`FormatError` subclass, never to an
unrelated exception.
"""


class SemrateError(Exception):
    """Base class for all semrate data errors."""

    category = "error"


class ValidationError(SemrateError, ValueError):
    """Invalid argument or violated type invariant."""

    category = "validation"


class FormatError(SemrateError):
    """Base class for wire/file format errors (ATTN, TRACE, FRAME)."""

    category = "format"


class BadMagicError(FormatError):
    category = "bad_magic"


class BadVersionError(FormatError):
    category = "bad_version"


class TruncatedError(FormatError):
    category = "truncated"


class TrailingDataError(FormatError):
    category = "trailing_data"


class ChecksumError(FormatError):
    category = "crc_mismatch"


class ReservedBitsError(FormatError):
    """Padding/reserved bits that must be zero are set."""

    category = "reserved_bits"


class DimensionError(FormatError):
    """Dimension field is zero, inconsistent, or exceeds the format's range."""

    category = "dimension"


class NonFiniteValueError(FormatError):
    """A stored value is NaN/Inf (or negative where the format forbids it)."""

    category = "non_finite"


class FieldValueError(FormatError):
    """A header field holds a structurally invalid value."""

    category = "field_value"
