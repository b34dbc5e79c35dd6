"""Shared exception types.

Every domain error raised by this package derives from
:class:`TransparentDpError` so callers (notably the CLI) can map failures
to a stable error name and a nonzero exit code.
"""


class TransparentDpError(Exception):
    """Base class for all domain errors raised by this package."""


class DegenerateDesignError(TransparentDpError, ValueError):
    """Regression design with zero variance in the regressor."""


class UnsupportedFamilyError(TransparentDpError, ValueError):
    """Operation not defined for the requested mechanism family."""


class DegenerateWeightsError(TransparentDpError, RuntimeError):
    """All importance weights vanished; K too small or parameters far off."""


class NonPDInformationError(TransparentDpError, RuntimeError):
    """Estimated Fisher information is not positive definite."""


class InfeasibleABCError(TransparentDpError, RuntimeError):
    """Rejection sampler acceptance rate too low to ever finish."""


class UndefinedIndexError(TransparentDpError, ValueError):
    """Dissimilarity index undefined (nonpositive group total)."""
