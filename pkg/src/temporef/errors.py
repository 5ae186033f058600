"""Exception types shared across the package."""


class TemporefError(Exception):
    """Base class for all temporef failures."""


class WavFormatError(TemporefError):
    """WAV file is malformed or uses an unsupported encoding."""


class FileFormatError(TemporefError):
    """Binary artifact file is malformed (magic, version, truncation, checksum)."""


class DimensionMismatchError(TemporefError):
    """Embedding dimensions disagree between components or files."""


class IncompleteBankError(TemporefError):
    """Reference bank does not cover every tempo on the grid."""
