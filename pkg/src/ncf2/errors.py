"""Exception types shared across the package."""


class InvalidPoseError(ValueError):
    """Raised when a pose carries a quaternion that is not unit length."""


class DatasetFormatError(RuntimeError):
    """Raised when an on-disk dataset has a bad magic number or version."""


class DatasetCorruptionError(RuntimeError):
    """Raised when an episode blob is truncated or inconsistent with its header."""


class DependencyError(RuntimeError):
    """Raised when a stage needs an artifact (e.g. a checkpoint) that is missing."""


class ConfigError(ValueError):
    """Raised on configuration schema violations or model/dataset mismatches."""


class ContractError(RuntimeError):
    """Raised when an API is driven outside its contract (e.g. step after done)."""
