"""Exception and warning types shared across the package."""


class SpatialBssError(Exception):
    """Base class for all errors raised by this package."""


class NotPositiveDefiniteError(SpatialBssError):
    """A matrix required to be symmetric positive definite is not."""


class EigenGapError(SpatialBssError):
    """Diagonal elements are not separated well enough for identifiability."""


class DegenerateDensityError(SpatialBssError):
    """Rejection sampling failed; the target density is (numerically) degenerate."""


class DataFormatError(SpatialBssError):
    """A CSV or config input is malformed; the message carries a line number."""


class NonConvergenceWarning(UserWarning):
    """Joint diagonalization hit the sweep limit before meeting its tolerance."""
