"""Custom exception classes for fluxamba."""


class FluxambaError(Exception):
    """Base class for every error raised by fluxamba."""

    pass


class DimensionError(FluxambaError):
    """Exception raised when tensor shapes do not line up.

    The message names the offending axes and their sizes.
    """

    pass


class ConfigError(FluxambaError):
    """Exception raised when a configuration or hyperparameter is invalid."""

    pass


class DispatchError(ConfigError):
    """Exception raised when a stage-specific operator is called from the wrong stage."""

    pass


class BatchNormError(ConfigError):
    """Exception raised when batch statistics cannot be computed.

    Train-mode batch normalization needs at least two samples per batch.
    """

    pass


class NumericError(FluxambaError):
    """Exception raised when a computation produces NaN or Inf values."""

    pass


class GradientError(FluxambaError):
    """Exception raised when reverse-mode differentiation is misused.

    Covers non-scalar losses, losses that are not recorded on the tape and
    replaying a tape that was already consumed.
    """

    pass


class DataError(FluxambaError):
    """Exception raised when input data or files cannot be used."""

    pass


class EmptySweepError(DataError):
    """Exception raised when a metric needs at least one image and got none."""

    pass


class CheckpointError(DataError):
    """Base class for checkpoint decoding failures."""

    pass


class CheckpointMagicError(CheckpointError):
    """Exception raised when a checkpoint does not start with the expected magic bytes."""

    pass


class CheckpointVersionError(CheckpointError):
    """Exception raised when a checkpoint was written by an unsupported format version."""

    pass


class CheckpointTruncatedError(CheckpointError):
    """Exception raised when a checkpoint ends before its declared content."""

    pass


class PgmError(DataError):
    """Base class for PGM decoding failures."""

    pass


class PgmMagicError(PgmError):
    """Exception raised when a file is not a netpbm file at all."""

    pass


class PgmUnsupportedFormatError(PgmError):
    """Exception raised for netpbm variants other than binary graymap (P5)."""

    pass


class PgmMaxvalError(PgmError):
    """Exception raised when the declared maxval is not 255."""

    pass


class PgmTruncatedError(PgmError):
    """Exception raised when the pixel payload is shorter than the header declares."""

    pass
