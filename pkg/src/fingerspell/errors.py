"""Exception types shared across the package."""


class FingerspellError(Exception):
    """Base class for all package errors."""


class AllZeroImageError(FingerspellError):
    """Depth image contains no nonzero pixel (no hand present)."""


class DimensionMismatchError(FingerspellError):
    """Array shapes or vector lengths are incompatible."""


class LengthMismatchError(DimensionMismatchError):
    """Paired sequences have different lengths."""


class ContentLargerThanTargetError(FingerspellError):
    """Nonzero bounding box does not fit the requested canvas."""


class WrongInputSizeError(FingerspellError):
    """Operation requires a specific input resolution."""


class FormatError(FingerspellError):
    """Malformed file content (bad magic, header, or truncated data)."""


class MissingFileError(FingerspellError):
    """A file referenced by a manifest does not exist."""


class UnknownLetterError(FingerspellError):
    """Letter label outside the 24-letter static alphabet."""


class UnknownUserError(FingerspellError):
    """Requested user id not present in the dataset."""


class EmptyDataError(FingerspellError):
    """Operation requires at least one sample/row."""


class LabelOutOfRangeError(FingerspellError):
    """Class label outside the model's label set."""


class NumericError(FingerspellError):
    """Non-finite value (NaN/Inf) detected during computation."""


class ConfigError(FingerspellError):
    """Invalid run configuration."""
