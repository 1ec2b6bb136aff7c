"""Exception types shared across the toolkit."""


class NmfsegError(Exception):
    """Base class for all toolkit errors."""


class IngestionError(NmfsegError):
    """Raised when an input file violates an ingestion precondition."""


class FormatError(NmfsegError):
    """Raised on malformed binary or text artifact files."""


class ConfigError(NmfsegError):
    """Raised on invalid configuration values."""


class DimensionError(NmfsegError):
    """Raised when matrix shapes do not agree."""


class NumericError(NmfsegError):
    """Raised when a computation produces non-finite values."""
