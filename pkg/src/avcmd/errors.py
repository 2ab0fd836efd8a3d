"""Exception hierarchy shared across the toolkit."""


class AvcmdError(Exception):
    """Base class for all toolkit errors."""


class FormatError(AvcmdError):
    """A serialized artifact does not match its wire format."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(FormatError):
    """File carries a version this build cannot read."""


class TruncatedPayloadError(FormatError):
    """File ends before the declared payload is complete."""


class DimensionOverflowError(FormatError):
    """A dimension does not fit the fixed-width wire field."""


class InvalidParameterError(AvcmdError):
    """An argument violates a documented precondition."""


class ConfigError(AvcmdError):
    """Configuration file or value is invalid."""


class DegenerateInputError(AvcmdError):
    """Input is structurally valid but unusable (e.g. single-class labels)."""


class UndefinedMetricError(AvcmdError):
    """A metric's denominator is zero; the value is undefined, not 0."""


class NoInputError(AvcmdError):
    """Fusion was asked to decide with no modality present."""


class ProtocolError(AvcmdError):
    """A session-layer message violates the dialogue protocol."""


class LeakageError(AvcmdError):
    """Cross-validation partition audit found test data in a training fold."""


class PipelineMismatchError(AvcmdError):
    """Model and encoder artifacts come from different pipelines."""


class SessionDesyncError(AvcmdError):
    """Audio and video streams disagree on the shared frame clock."""
