"""Typed failures shared across the package.

The CLI maps every SnowpipeError to exit code 2 (data/validation error);
usage problems exit 1.
"""


class SnowpipeError(Exception):
    """Base class for all data and validation failures raised here."""


class IoError(SnowpipeError):
    """File could not be read or written."""


class MissingFile(SnowpipeError):
    """A referenced file does not exist."""


class LengthMismatch(SnowpipeError):
    """Byte length or vector length differs from what was declared."""


class SchemaError(SnowpipeError):
    """Manifest/model document violates its schema."""


class DimensionMismatch(SnowpipeError):
    """Grid shapes disagree with the declared stack geometry."""


class BadAcquisitionCount(SnowpipeError):
    """Stack does not contain exactly 12 acquisitions."""


class ValidationError(SnowpipeError):
    """A value-range invariant is violated (coherence, target, aspect...)."""


class MaskNotValid(SnowpipeError):
    """Pixel mask references a nodata pixel or is out of bounds."""


class TooFewRows(SnowpipeError):
    """Not enough samples for the requested operation."""


class TooSmall(SnowpipeError):
    """Requested scene is too small to synthesize."""


class ShapeMismatch(SnowpipeError):
    """Array shapes are inconsistent with the model layout."""


class EmptyBatch(SnowpipeError):
    """Loss/gradient requested on an empty batch."""


class NonFiniteLoss(SnowpipeError):
    """Training produced a NaN/inf loss; aborted with diagnostics."""


class ZeroVariance(SnowpipeError):
    """Metric undefined because an input has zero variance."""


class BadRange(SnowpipeError):
    """Histogram range is empty, inverted or non-finite."""


class DisjointnessViolation(SnowpipeError):
    """Train and test pixel sets overlap when they must not."""


class UsageConflict(Exception):
    """Mutually inconsistent CLI flags (exit code 1, not a data error)."""
