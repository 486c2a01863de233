"""Exception taxonomy for the engine.

Every failure raised by this package derives from ``HiredError`` so callers
can catch one base class.  The CLI maps these onto exit codes: anything that
means "your input or configuration is wrong" exits 1, genuine I/O failures
(missing files, unreadable paths) exit 2.
"""

from __future__ import annotations


class HiredError(Exception):
    """Base class for all engine errors."""

    def __init__(self, message: str, subject: str | None = None):
        super().__init__(message)
        # flag name or file path the error should be reported against
        self.subject = subject


class TensorIOError(HiredError):
    """Base class for tensor/manifest ingestion errors."""


class MalformedHeader(TensorIOError):
    """NPY magic, version, or header dict is broken or inconsistent."""


class UnsupportedDtype(TensorIOError):
    """NPY dtype is not little-endian f32/f64, or the array is Fortran-order."""


class ShapeMismatch(TensorIOError):
    """Array is not 3-dimensional (layers, heads, tokens)."""


class NonFiniteValue(TensorIOError):
    """Attention values must be finite."""


class NegativeValue(TensorIOError):
    """Attention values must be nonnegative (post-softmax)."""


class ManifestMissing(TensorIOError):
    """manifest.json does not exist in the dump directory."""


class ManifestInvalid(TensorIOError):
    """Manifest violates the schema; message names the offending field."""


class EmptyCandidateList(HiredError):
    """Partition planning needs at least one grid candidate."""


class IndexOutOfRange(HiredError):
    """Sub-image index outside 1..k."""


class MissingLayer(HiredError):
    """Requested model layer was not captured in the dump."""

    def __init__(self, layer: int, captured: list[int] | None = None, subject: str | None = None):
        detail = f" (captured: {captured})" if captured is not None else ""
        super().__init__(f"layer {layer} not present in dump{detail}", subject)
        self.layer = layer


class UnknownPartition(HiredError):
    """Requested partition id does not exist in the dump."""


class BudgetExceedsCapacity(HiredError):
    """Requested budget is negative or larger than (k+1) * tokens_per_partition."""


class ConfigError(HiredError):
    """Invalid engine configuration; ``field`` names the offending option."""

    def __init__(self, field: str, message: str):
        super().__init__(message, subject=field)
        self.field = field
