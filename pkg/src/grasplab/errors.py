"""Exception hierarchy shared across the package.

Three user-facing failure categories map to distinct CLI exit codes:
configuration (bad config/catalog/schema), validation (bad data at
runtime boundaries), and runtime (faults during simulation/training).
"""


class GraspLabError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(GraspLabError):
    """Invalid configuration value, catalog entry, or threshold ordering."""


class ValidationError(GraspLabError):
    """Input data violates a documented contract."""


class DegenerateInputError(ValidationError):
    """Too little or rank-deficient data for the requested computation."""


class DomainError(ValidationError):
    """Argument outside the mathematical domain (non-finite, wrong sign)."""


class SensorFaultError(GraspLabError):
    """Non-finite sensor values; the episode terminates as a failure."""


class PhaseError(GraspLabError):
    """Operation called in the wrong episode phase."""


class TraceFormatError(ValidationError):
    """Trajectory trace file has a missing/unsupported versioned header."""


class SchemaMismatchError(ConfigurationError):
    """Checkpoint observation schema does not match the environment."""
