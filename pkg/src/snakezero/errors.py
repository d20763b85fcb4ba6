"""Package-wide exception types."""


class SnakezeroError(Exception):
    """Base class for errors raised by this package."""


class ContractViolation(SnakezeroError):
    """An operation was called outside its documented preconditions."""


class InvalidConfiguration(SnakezeroError):
    """A configuration value is outside the supported domain."""


class InvalidChanceOutcome(SnakezeroError):
    """An explicit apple cell is not a valid chance outcome."""


class NoCycleError(SnakezeroError):
    """No Hamiltonian cycle exists for the requested board size."""


class CheckpointVersionError(SnakezeroError):
    """Checkpoint format version is not supported by this build."""


class CheckpointIntegrityError(SnakezeroError):
    """Checkpoint contents fail integrity verification."""


class NumericError(SnakezeroError):
    """A numeric computation produced non-finite values."""
