"""Exception hierarchy shared by all modules.

Every error raised on a contract violation derives from ChoquardError so
the command line driver can map failures to exit codes in one place.
"""


class ChoquardError(Exception):
    """Base class for all library errors."""


class ParseError(ChoquardError):
    """Malformed group tag, nonlinearity string or config entry."""


class NonPositiveDefinite(ChoquardError):
    """Coxeter bilinear form is not positive definite (group not finite)."""


class CapExceeded(ChoquardError):
    """Group closure exceeded the element cap."""


class PointOutsideChamber(ChoquardError):
    """Query point lies outside the closed fundamental chamber."""


class IncompatibleGrid(ChoquardError):
    """Grid parameters violate their constraints (dim, M, L)."""


class GridMismatch(ChoquardError):
    """Two fields or a field and an operator live on different grids."""


class AlphaOutOfRange(ChoquardError):
    """Riesz order alpha outside the open interval (0, N)."""


class NonpositiveQ(ChoquardError):
    """Interaction term Q(u) <= 0 where positivity is required."""


class NoDescent(ChoquardError):
    """Line search stagnated or iteration budget ran out above tolerance."""


class SymmetryDrift(ChoquardError):
    """Symmetry residual of an interpolated group action grew too large."""


class SeparationViolation(ChoquardError):
    """Orbit bumps of an initializer overlap."""


class BumpLeavesDomain(ChoquardError):
    """Translated bump support does not fit inside the computational cube."""


class AllBelowFloor(ChoquardError):
    """Every radial shell statistic sits below the floating point floor."""


class NoNodalCandidates(ChoquardError):
    """No converged sign-changing solutions available for the bound."""


class SupportViolation(ChoquardError):
    """Field support is not contained in the closed fundamental chamber."""


class HypothesisViolation(ChoquardError):
    """Nonlinearity fails a structural hypothesis and no override was given."""
