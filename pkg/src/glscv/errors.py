"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: usage/parameter problems exit 1, bad
input data exits 2, numerical failures exit 3.
"""


class GlsError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(GlsError, ValueError):
    """A model or routine parameter lies outside its allowed range."""


class DataError(GlsError, ValueError):
    """Input data violates a structural invariant (parse, shape, ordering)."""


class NumericalError(GlsError, ArithmeticError):
    """A factorization or optimisation could not be carried out reliably."""


class ConditioningError(NumericalError):
    """A correlation block or cross-product matrix is too ill-conditioned."""


class RankDeficiencyError(NumericalError):
    """The design matrix does not have full column rank."""


class DeletionSingularError(NumericalError):
    """Deleting a subset leaves a singular system (leverage one)."""

    def __init__(self, message, subset=None):
        super().__init__(message)
        self.subset = subset


class OptimizationError(NumericalError):
    """The correlation-parameter search failed."""
