"""Exception types shared across the package."""


class DPEError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(DPEError):
    """Invalid configuration: bad geometry, options, files, or formats."""


class NumericError(DPEError):
    """A computation produced NaN/Inf or an otherwise unusable value."""


class StaleCacheError(DPEError):
    """A backward pass was attempted with a cache from an outdated forward."""
