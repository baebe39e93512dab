"""Exception types shared across the package."""


class DomainError(ValueError):
    """Raised when a field evaluation receives inputs outside its domain."""


class SingularityError(ValueError):
    """Raised when the steering angle approaches the tan() singularity.

    Carries the offending control interval index when raised during a
    multi-interval simulation (``interval`` is None otherwise).
    """

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class SolverInputError(ValueError):
    """Raised for malformed optimization problems or non-finite start points."""


class ScenarioFormatError(ValueError):
    """Raised when a scenario file cannot be parsed."""


class ScenarioValidationError(ValueError):
    """Raised when a parsed scenario violates an invariant."""


class GridMismatchError(ValueError):
    """Raised when two artifact sets do not share a common time grid."""
