"""Type definitions."""

__all__ = [
    "QRecordsError",
    "LayoutMismatchError",
    "DomainError",
    "NullProjectionError",
    "SetupValidationError",
    "PartitionError",
    "DimensionBoundError",
    "BranchError",
    "UnreachableLabelError",
    "NumericalViolationError",
    "ScenarioError",
    "DisturbingPreconditionWarning",
    "CoincidenceWarning",
]


class QRecordsError(Exception):
    """Base qrecords exception."""


class LayoutMismatchError(QRecordsError):
    """States or operators are defined over different register layouts."""


class DomainError(QRecordsError):
    """A basis label lies outside the domain of an operator or layout."""


class NullProjectionError(QRecordsError):
    """A projection removed the whole state, the outcome is impossible."""


class SetupValidationError(QRecordsError, ValueError):
    """A measurement setup or lattice world violates its invariants."""


class PartitionError(QRecordsError):
    """A projector family does not partition the identity."""


class DimensionBoundError(QRecordsError):
    """The Hilbert space is larger than the dense oracle bound."""


class BranchError(QRecordsError):
    """A state does not have the branch structure an operation needs."""


class UnreachableLabelError(QRecordsError):
    """Requested records cannot be planted in the given world and horizon."""


class NumericalViolationError(QRecordsError):
    """Norm drift or another numerical invariant exceeded its limit."""


class ScenarioError(QRecordsError):
    """A scenario is well formed but cannot be executed as described."""


class DisturbingPreconditionWarning(UserWarning):
    """A measurement was applied with a pointer that was not ready."""


class CoincidenceWarning(UserWarning):
    """Three or more particles met on one lattice site."""
