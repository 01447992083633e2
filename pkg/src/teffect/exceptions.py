"""Exception types shared across the package."""


class TeffectError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(TeffectError):
    """An array has the wrong length or width for the requested operation."""


class NonFiniteLoss(TeffectError):
    """A training or evaluation objective became NaN or infinite."""


class EmptyArm(TeffectError):
    """No observations carry the requested treatment level."""


class DegenerateWeights(TeffectError):
    """All estimation weights for a treatment level are zero."""


class AllZeroWeights(TeffectError):
    """A weighted summary was requested with a zero total weight."""


class NoConvergence(TeffectError):
    """An iterative solver exhausted its iteration budget."""


class QuadratureOverflow(TeffectError):
    """Non-finite values inside the density quadrature; basis or scale is off."""


class SingularCurvature(TeffectError):
    """A curvature estimate is too close to zero to invert."""


class NegativeVariance(TeffectError):
    """A variance diagonal entry is negative beyond numerical tolerance."""


class ConfigError(TeffectError):
    """A configuration document or flag set is invalid."""


class SchemaMismatch(TeffectError):
    """Two report files disagree on schema or on the truth for the same key."""


class ParseError(TeffectError):
    """A CSV cell failed numeric parsing.

    Carries the 1-based data row and the column name.
    """

    def __init__(self, row, column):
        self.row = row
        self.column = column
        super().__init__(f"non-numeric value at row {row}, column {column!r}")


class ValidationFailed(TeffectError):
    """Input data violated the sample contract; carries the violation list."""

    def __init__(self, violations):
        self.violations = list(violations)
        detail = "; ".join(str(v) for v in self.violations)
        super().__init__(f"sample validation failed: {detail}")
