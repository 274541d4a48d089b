"""Exception types raised across the package."""


class SchattenLabError(Exception):
    """Base class for all package errors."""


class LeakageExceeded(SchattenLabError):
    """Mass in the outer shell of the periodic box exceeds the tolerance."""


class ShapeMismatch(SchattenLabError, ValueError):
    pass


class NumericalBreakdown(SchattenLabError):
    pass


class ExponentMismatch(SchattenLabError, ValueError):
    """Exponents violate the scaling relation or the admissible range."""


class QuadratureUnderresolved(SchattenLabError):
    """Step refinement changed the result by more than the gate."""


class DegenerateCoeffs(SchattenLabError, ValueError):
    pass


class FourierUnavailable(SchattenLabError):
    pass


class RegimeViolated(SchattenLabError, ValueError):
    pass


class InsufficientData(SchattenLabError, ValueError):
    pass


class InadmissibleExponents(SchattenLabError, ValueError):
    pass
