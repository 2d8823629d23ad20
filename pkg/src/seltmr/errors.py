"""Exception types shared across the package."""


class SeltmrError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SeltmrError):
    """Tensor or layer shapes are incompatible."""


class FormatError(SeltmrError):
    """A model container or dataset file is malformed."""


class TruncatedBlobError(FormatError):
    """A binary blob is shorter than its manifest or header declares."""


class HashMismatchError(FormatError):
    """Stored content hash does not match the bytes on disk."""


class PlanError(SeltmrError):
    """A fault plan is invalid or cannot be applied to the given model."""


class RelevanceError(SeltmrError):
    """Relevance propagation failed (trace mismatch or zero denominator)."""
