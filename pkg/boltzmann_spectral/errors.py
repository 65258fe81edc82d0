"""Exception hierarchy for the spectral solver.

Every error also derives from the closest builtin so callers can catch either form.
"""


class SpectralError(Exception):
    """Base class for all solver errors."""


class DomainError(SpectralError, ValueError):
    """Special-function argument outside its domain."""


class QuadraturePreconditionError(SpectralError, ValueError):
    """Declared vanish order does not make the beta-moment integrable."""


class QuadratureConvergenceError(SpectralError, RuntimeError):
    """Graded quadrature exhausted its refinement levels."""


class CoefficientOverflowError(SpectralError, OverflowError):
    """Log-space prefactor outside the representable range."""


class WeightOverflowError(SpectralError, OverflowError):
    """Gelfand-Shilov weight exponent outside the representable range."""


class TableCoverageError(SpectralError, LookupError):
    """Coefficient requested beyond the energy range of a table."""


class AdmissibilityError(SpectralError, ValueError):
    """Initial data does not vanish on the collision invariants."""


class SupportError(SpectralError, ValueError):
    """State carries modes outside the assembled system."""


class StiffnessError(SpectralError, RuntimeError):
    """Adaptive time step underflowed."""


class TableFileError(SpectralError, OSError):
    """Base class for coefficient-table file problems."""


class MalformedFileError(TableFileError):
    """File is truncated or not a coefficient table."""


class VersionMismatchError(TableFileError):
    """File was written with an incompatible format version."""


class DigestMismatchError(TableFileError):
    """Stored content digest does not match the decoded payload."""


class UsageError(SpectralError, ValueError):
    """Invalid command-line usage."""
