"""Exception types shared across the package."""


class SparseRnntError(Exception):
    """Base class for all package errors."""


class ShapeError(SparseRnntError, ValueError):
    """Tensor/vector dimensions are inconsistent."""


class ParameterError(SparseRnntError, ValueError):
    """A configuration value violates its contract."""


class EmptyInputError(SparseRnntError, ValueError):
    """Input too short or empty for the requested operation."""


class VocabularyError(SparseRnntError, ValueError):
    """Token id outside the vocabulary."""


class DataError(SparseRnntError, ValueError):
    """Input data is malformed or incomplete."""


class AudioFormatError(SparseRnntError, IOError):
    """WAV file is missing, malformed, or uses an unsupported encoding."""


class ModelFormatError(SparseRnntError, IOError):
    """Model file is corrupt; message names the offending tensor when known."""
