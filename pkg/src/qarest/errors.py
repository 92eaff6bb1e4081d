"""Exception hierarchy shared across the package."""


class QarestError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(QarestError, ValueError):
    """Invalid model, optimizer, or run configuration."""


class DimensionError(QarestError, ValueError):
    """Mismatched or unsupported tensor/array shapes."""


class InputError(QarestError, ValueError):
    """Input data violates a precondition (non-finite values, too small, ...)."""


class CodecError(QarestError, RuntimeError):
    """JPEG encode/decode failure."""


class ManifestError(QarestError, ValueError):
    """Corpus or score manifest could not be built or parsed."""


class ParseError(ManifestError):
    """Malformed manifest row; message carries the 1-based line number."""


class ValidationError(ManifestError):
    """Well-formed row with an out-of-vocabulary or inconsistent field."""


class CheckpointError(QarestError, RuntimeError):
    """Checkpoint could not be written or read back."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version not supported by this build."""


class CheckpointShapeError(CheckpointError):
    """Stored parameter shapes do not match the configured model."""


class TrainingDivergedError(QarestError, RuntimeError):
    """Non-finite loss encountered; message carries step, lr, batch identifiers."""


class UndefinedCorrelationError(QarestError, ValueError):
    """Correlation undefined (constant input, too few samples)."""
