"""Exception types shared across the package."""


class FpclassError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FpclassError, ValueError):
    """Tensor or layer geometry is inconsistent (mismatched or degenerate shapes)."""


class InvalidArgumentError(FpclassError, ValueError):
    """A value is outside its documented domain."""


class ConfigError(FpclassError, ValueError):
    """A layer or network configuration is invalid (e.g. indivisible grouping)."""


class StateError(FpclassError, RuntimeError):
    """An operation was called in the wrong order (e.g. backward before forward)."""


class TopologyError(FpclassError, ValueError):
    """Shape inference failed for a network topology; the message names the layer."""


class StratificationError(FpclassError, ValueError):
    """A dataset cannot be split into the requested stratified folds."""


class ProtocolError(FpclassError, ValueError):
    """An evaluation protocol precondition is violated."""


class ManifestError(FpclassError, ValueError):
    """A dataset manifest is malformed; the message names the offending line."""


class CheckpointError(FpclassError):
    """Base class for model checkpoint I/O failures."""


class CheckpointMagicError(CheckpointError):
    """The file does not start with the checkpoint magic tag."""


class CheckpointVersionError(CheckpointError):
    """The checkpoint format version is not supported."""


class CheckpointTruncatedError(CheckpointError):
    """The checkpoint ends before all declared weight blobs were read."""


class CheckpointMismatchError(CheckpointError):
    """Checkpoint blob shapes disagree with the declared topology."""
