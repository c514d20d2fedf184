"""Typed errors for badm-dance.

Every error carries the process exit code the command line reports for it:
2 for validation problems, 3 for unreadable or malformed files, 4 for numeric
failures.
"""


class BadmError(Exception):
    """Base class for all badm-dance errors."""

    exit_code = 1


class ValidationError(BadmError, ValueError):
    """Input violates a documented precondition."""

    exit_code = 2


class FileFormatError(BadmError):
    """A file has the wrong magic, version or schema."""

    exit_code = 3


class NumericFailure(BadmError):
    """A computation produced non-finite or otherwise unusable numbers."""

    exit_code = 4


class ShapeMismatch(ValidationError):
    pass


class NotDivisible(ValidationError):
    pass


class BadT(ValidationError):
    pass


class StepOutOfRange(ValidationError):
    pass


class SequenceTooShort(ValidationError):
    pass


class NotARotation(ValidationError):
    pass


class EmptyContext(ValidationError):
    pass


class NonScalarLoss(ValidationError):
    pass


class BadProbability(ValidationError):
    pass


class AudioTooShort(ValidationError):
    pass


class BadSampleRate(ValidationError):
    pass


class NeedTwoItems(ValidationError):
    pass


class NoMusicBeats(ValidationError):
    pass


class NoMotionBeats(ValidationError):
    pass


class DimMismatch(ValidationError):
    pass


class BadChunkLength(ValidationError):
    pass


class MaskOutOfRange(ValidationError):
    pass


class FeatureTooShort(ValidationError):
    pass


class EmptyDataset(ValidationError):
    pass


class BadSpec(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class DegenerateRotation(NumericFailure):
    pass


class NonPSD(NumericFailure):
    pass
