"""Exception hierarchy shared across the package.

The CLI maps each category to a distinct exit code (see cli module).
"""


class ConvmtError(Exception):
    """Base class for all package errors."""


class ConfigError(ConvmtError):
    """Malformed or inconsistent configuration (unknown keys, bad values)."""


class ShapeError(ConvmtError):
    """Tensor/shape mismatch or invalid dimensions."""


class DataError(ConvmtError):
    """Invalid data: NaN/Inf, empty corpora, misaligned bitext, bad ids."""


class FormatError(ConvmtError):
    """Corrupt or version-mismatched serialized artifact."""
