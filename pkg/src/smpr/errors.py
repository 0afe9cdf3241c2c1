"""Exception types shared across the package."""


class SmprError(Exception):
    """Base class for all smpr errors."""


class InvalidInputError(SmprError):
    """Malformed or dimensionally inconsistent input."""


class NumericOverflowError(SmprError):
    """A computation would overflow (e.g. exp of a huge linear predictor)."""


class EmptyRiskSetError(SmprError):
    """No subject at risk at the requested evaluation point."""


class SingularMatrixError(SmprError):
    """A matrix that must be inverted is singular or too ill-conditioned."""


class QuantileOutOfRangeError(SmprError):
    """Requested quantile is beyond the reach of the estimated hazard."""


class ExtrapolationError(SmprError):
    """Evaluation requested beyond the truncation point of the hazard."""


class InsufficientDrawsError(SmprError):
    """Too few valid multiplier draws to form a confidence band."""


class StudyUnstableError(SmprError):
    """Too many non-convergent replicates in a simulation study."""
