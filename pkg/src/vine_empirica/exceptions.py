"""Exception hierarchy shared by all modules."""


class VineEmpiricaError(Exception):
    """Base class for package errors."""


class InvalidInputError(VineEmpiricaError, ValueError):
    """Malformed or out-of-range user input."""


class EstimationError(VineEmpiricaError):
    """A finite-difference window or a parameter fit could not be evaluated."""


class VineStructureError(VineEmpiricaError):
    """A vine violates the regular-vine rules."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class VineParseError(VineEmpiricaError):
    """Vine or model JSON could not be decoded."""


class ConvergenceError(EstimationError):
    """A numerical inversion did not converge."""
