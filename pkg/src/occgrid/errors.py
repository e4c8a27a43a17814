"""Exception hierarchy shared across the package.

Three top-level categories map onto the CLI exit codes: validation
errors (bad inputs or configuration, exit 2), data errors (broken
files, exit 3), and internal invariant violations (exit 4).
"""


class OccGridError(Exception):
    """Base class for all package errors."""


class ValidationError(OccGridError):
    """Invalid inputs, configuration, or argument combinations."""


class SpecMismatchError(ValidationError):
    """Grids/masks with different GridSpecs were combined."""


class TrackMismatchError(ValidationError):
    """Box interpolation across different track ids."""


class MissingTrackError(ValidationError):
    """A box references a track with no canonical cloud."""


class UnknownTrackError(ValidationError):
    """A track id that appears in no frame."""


class InsufficientReferenceError(ValidationError):
    """KNN voting requested against an empty labeled reference."""


class NoAnnotationsError(ValidationError):
    """Track interpolation requested with no keyframes."""


class DataError(OccGridError):
    """Problems reading persisted scenes, grids, or masks."""


class FormatError(DataError):
    """Bad magic bytes or unsupported format version."""


class ChecksumMismatchError(DataError):
    """Trailing checksum does not match the file body."""


class CorruptPayloadError(DataError):
    """Truncated or inconsistent binary payload."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (at byte offset {byte_offset})")
        self.byte_offset = byte_offset


class SizeMismatchError(DataError):
    """Body length disagrees with the header's dimensions."""


class DimensionOverflowError(DataError):
    """Header dimensions exceed sane bounds."""


class MissingPayloadError(DataError):
    """Manifest references a payload file that does not exist."""


class ManifestError(DataError):
    """Scene manifest violates the schema."""


class InternalError(OccGridError):
    """An internal invariant was violated; indicates a bug."""
