"""Exception types shared across the package.

Errors are split roughly by contract: domain/precondition violations,
resource caps, numerical convergence failures, and artifact/config problems.
"""


class FloorwalkError(Exception):
    """Base class for all package errors."""


class DomainError(FloorwalkError):
    """An argument lies outside the mathematical domain of the operation."""


class TooSmall(FloorwalkError):
    """The cluster is too small for the requested structural operation."""


class CapExceeded(FloorwalkError):
    """A walk exceeded its step cap before absorbing."""


class ResampleLimit(FloorwalkError):
    """Too many consecutive floor absorptions without a cluster hit."""


class NoConvergence(FloorwalkError):
    """An iterative construction stalled above its tolerance."""


class InsufficientData(FloorwalkError):
    """Not enough points to perform the requested fit."""


class WindowTooSmall(FloorwalkError):
    """Doubling the truncation window moved an exact result too much."""


class NotOuterBoundary(FloorwalkError):
    """The queried site is not an outer-boundary site of the cluster."""


class NotConverged(FloorwalkError):
    """A limit sequence failed its Cauchy criterion."""


class EnvelopeViolation(FloorwalkError):
    """An edge measure exceeded its rate envelope beyond tolerance."""


class WindowOverflow(FloorwalkError):
    """Growth reached the frozen boundary of a finite window."""


class ConfigInvalid(FloorwalkError):
    """A run configuration failed schema validation.

    Carries a JSON-pointer style path to the offending field.
    """

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}")


class ChecksumMismatch(FloorwalkError):
    """A replayed run produced artifacts differing from the manifest."""


class IoError(FloorwalkError):
    """An artifact could not be read, written, or locked."""


class SchemaMismatch(FloorwalkError):
    """An artifact does not parse against its documented schema."""


class MixedRuns(FloorwalkError):
    """Artifacts from different runs were combined where one run is required."""
