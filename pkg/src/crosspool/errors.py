"""Exception hierarchy shared by every crosspool module.

The CLI maps these onto exit codes: configuration problems exit with 2,
data and geometry problems with 3, numerical problems with 4.
"""


class CrossPoolError(Exception):
    """Base class for all crosspool failures."""


class ConfigError(CrossPoolError):
    """A config file, network definition, or CLI flag combination is invalid."""


class FormatError(CrossPoolError):
    """A binary file does not carry the expected magic or header layout."""


class CorruptionError(CrossPoolError):
    """A file's header promises a different payload size than the file holds."""


class ValidationError(CrossPoolError):
    """A value breaks a type invariant (zero dimension, length mismatch, ...)."""


class GeometryError(CrossPoolError):
    """A spatial operation cannot produce a valid output shape."""


class ContractError(CrossPoolError):
    """Two arguments disagree on counts, dimensions, or required flags."""


class RankError(CrossPoolError):
    """More principal components were requested than the sample supports."""

    def __init__(self, message: str, achievable_rank: int):
        super().__init__(message)
        self.achievable_rank = achievable_rank
