"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage errors -> 1, invariant/assertion
failures -> 2, resource and resolution limits -> 3.
"""


class ConewidthError(Exception):
    """Base class for all package errors."""


class DomainError(ConewidthError):
    """An argument is outside the mathematical domain of an operation."""


class ValidationError(ConewidthError):
    """A constructed object violates one of its structural invariants."""


class ArgumentError(ConewidthError):
    """Arguments are well-typed but mutually inconsistent (usage error)."""


class ResolutionError(ConewidthError):
    """The request cannot be represented at the current grid resolution."""


class ResourceError(ConewidthError):
    """A configured memory or size cap would be exceeded."""


class CalibrationError(ResolutionError):
    """An iterative calibration hit its floor without meeting its target.

    Carries the best value achieved so the caller can report it.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class ParameterError(ConewidthError):
    """A parameter bundle violates one of its coupled budget bounds."""

    def __init__(self, message, violated=()):
        super().__init__(message)
        self.violated = tuple(violated)
