"""Exception types shared across the package.

The CLI maps these onto exit codes (config 2, data 3, compute 4), so every
error raised by library code should be one of them or a subclass.
"""


class ScalodetError(Exception):
    """Base class for all scalodet errors."""


class ConfigError(ScalodetError):
    """Invalid parameter or configuration value."""


class DataError(ScalodetError):
    """Input data violates a contract: unreadable file, bad shape, NaN, ..."""


class ComputeError(ScalodetError):
    """A pipeline stage failed while processing valid inputs."""
