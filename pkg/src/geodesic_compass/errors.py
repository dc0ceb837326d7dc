"""Exception hierarchy.

Everything raised for a numerical reason derives from :class:`NumericalError`
so the command line can map it to a single exit status.
"""


class NumericalError(ArithmeticError):
    """Base class for numeric failures (truncation, quadrature, conditioning)."""


class SeriesTruncationError(NumericalError):
    """A series hit its term cap before meeting the requested tolerance."""


class QuadratureError(NumericalError):
    """A quadrature rule could not certify the requested accuracy."""


class DiscretizationError(NumericalError):
    """A finite-difference residual is dominated by the stencil error."""


class ConditioningError(NumericalError):
    """The conditioning event has zero (or underflowing) probability."""
