"""Exception types shared across the toolkit."""


class MedVqaError(Exception):
    """Base class for all toolkit errors."""


class CorpusNotFoundError(MedVqaError):
    """A corpus root or one of its required files does not exist."""


class CorpusParseError(MedVqaError):
    """A corpus file contains a malformed record.

    Carries the file path and 1-based line number of the offending line.
    """

    def __init__(self, path, line_number: int, reason: str):
        self.path = str(path)
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"{self.path}:{line_number}: {reason}")


class IntegrityError(MedVqaError):
    """Cross-record consistency violation (dangling ids, colliding ids)."""


class EmptyVocabularyError(MedVqaError):
    """Vocabulary construction filtered out every answer."""


class VocabularyError(MedVqaError):
    """Lookup of an answer or token id outside the vocabulary."""


class ShapeError(MedVqaError):
    """An array does not match the shape required by the model config."""


class CheckpointFormatError(MedVqaError):
    """Checkpoint file has a bad magic, header, or unsupported version."""


class CheckpointIntegrityError(MedVqaError):
    """Checkpoint payload is truncated or inconsistent with its header."""


class NumericError(MedVqaError):
    """A non-finite value appeared where finite numbers are required."""


class ConfigError(MedVqaError):
    """Invalid or inconsistent configuration."""


class SmallStratumWarning(UserWarning):
    """A split stratum was too small to partition and went entirely to train."""
