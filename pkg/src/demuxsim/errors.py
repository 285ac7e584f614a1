"""Exception types shared across the package."""


class DemuxsimError(Exception):
    """Base class for all package errors."""


class ConfigError(DemuxsimError):
    """Invalid parameters or configuration (CLI exit code 2)."""


class DataError(DemuxsimError):
    """Malformed or insufficient input data (CLI exit code 3)."""
