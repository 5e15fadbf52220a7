"""Exception taxonomy shared across the package.

CLI exit codes: ConfigError -> 1, everything else raised at runtime -> 2.
"""


class SpykerSimError(Exception):
    """Base class for all package errors."""


class ConfigError(SpykerSimError):
    """Invalid experiment configuration (bad field, infeasible topology, unknown node)."""


class ProtocolViolation(SpykerSimError):
    """A state machine received a message that its contract forbids."""


class NumericsError(SpykerSimError):
    """A non-finite value appeared in a numerical computation."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class DataFormatError(SpykerSimError):
    """Base class for dataset file parsing errors."""


class IdxMagicError(DataFormatError):
    """IDX file does not start with the expected magic number."""


class IdxTruncatedError(DataFormatError):
    """IDX file ends before the declared payload."""


class IdxCountMismatchError(DataFormatError):
    """Image and label files declare different sample counts."""
