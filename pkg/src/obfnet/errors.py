"""Exception hierarchy shared across the package.

Everything raised deliberately by obfnet derives from ObfnetError so the
CLI can catch one type and turn it into a clean exit code.
"""


class ObfnetError(Exception):
    """Base class for all obfnet errors."""


class ShapeError(ObfnetError):
    """Tensor or layer shapes are incompatible."""


class StateError(ObfnetError):
    """An operation was called in the wrong order (e.g. backward before forward)."""


class NumericError(ObfnetError):
    """A non-finite value appeared where finite values are required."""


class TrainingDiverged(NumericError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, loss):
        super().__init__(f"training diverged at epoch {epoch}: loss={loss}")
        self.epoch = epoch
        self.loss = loss


class DataError(ObfnetError):
    """A dataset file is missing, malformed, or inconsistent."""


class ModelFormatError(ObfnetError):
    """Base class for model-file parsing failures."""


class MagicError(ModelFormatError):
    """Model file does not start with the expected magic bytes."""


class VersionError(ModelFormatError):
    """Model file declares an unsupported format version."""


class ChecksumError(ModelFormatError):
    """Model file CRC does not match its contents."""


class LayoutError(ModelFormatError):
    """Model file structure is inconsistent (shapes, byte counts, tags)."""


class ProtocolError(ObfnetError):
    """A wire frame could not be parsed or the peer reported an error."""

    def __init__(self, message: str, code: int | None = None):
        super().__init__(message)
        self.code = code
