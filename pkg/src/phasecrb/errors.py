"""Exception and warning types raised across the package."""


class PhaseCRBError(Exception):
    """Base class for all package errors."""


class NonConvergence(PhaseCRBError):
    """Adaptive quadrature ran out of subdivisions before meeting tolerance."""


# Alternate name for quadrature failures.
QuadratureFailure = NonConvergence


class Singular(PhaseCRBError):
    """Matrix is numerically singular."""


class NotHermitian(PhaseCRBError):
    """Matrix asymmetry exceeds the requested tolerance."""


class NotPSD(PhaseCRBError):
    """A Fisher matrix has a significantly negative eigenvalue."""


class InvalidWidth(PhaseCRBError, ValueError):
    pass


class InvalidParameters(PhaseCRBError, ValueError):
    pass


class DegenerateOmega(PhaseCRBError):
    """Parameters are locally indistinguishable; the mode basis cannot be built."""


class NegativeProbability(PhaseCRBError):
    """A second-order probability went negative (trust region exceeded)."""


class InvalidProbabilities(PhaseCRBError, ValueError):
    pass


class StepTooLarge(PhaseCRBError):
    """Richardson estimates of a classical Fisher matrix disagree."""


class BoundaryMaximum(PhaseCRBError):
    """The likelihood maximum sits on the search bounds."""


class ConfigError(PhaseCRBError, ValueError):
    """Invalid problem configuration; message carries the offending line."""


class ApproximationInvalid(UserWarning):
    """First-order (constant-field) forms requested outside their regime."""


class RegimeViolation(PhaseCRBError, UserWarning):
    """F11*F22 >> F12**2 does not hold, so the closed-form bounds are loose.

    Issued as a warning by default; raised when the caller asks for strict mode.
    """


class DegenerateMode(PhaseCRBError):
    """A mode has negligible population, so its phase is undefined."""
