"""Exception and warning types shared across the package."""


class MemaError(Exception):
    """Base class for all package errors."""


class DomainError(MemaError):
    """An argument lies outside its mathematically valid domain."""


class MissingField(MemaError):
    """A required optional field (e.g. the bivariate trio) is absent."""


class NegativeRadicand(MemaError):
    """The exposure-mean recovery hit a negative square-root argument.

    Signals internally inconsistent published summary statistics.
    """


class ParseError(MemaError):
    """A data file failed to parse; carries row/column location."""

    def __init__(self, message, row=None, column=None):
        loc = ""
        if row is not None:
            loc += f" (row {row}"
            loc += f", column {column!r})" if column is not None else ")"
        super().__init__(message + loc)
        self.row = row
        self.column = column


class SchemaError(MemaError):
    """A data file is missing required columns or has unknown ones."""


class RaggedData(MemaError):
    """Individual-participant rows have inconsistent or missing cells."""


class EmptyInput(MemaError):
    """An operation received an empty collection where data is required."""


class LengthMismatch(MemaError):
    """Parallel per-study inputs have different lengths."""


class SingleStudyVariance(MemaError):
    """A cross-study variance was requested for a single study."""


class DimensionMismatch(MemaError):
    """Array dimensions are incompatible."""


class NotPSD(MemaError):
    """A matrix required to be positive semi-definite is not."""


class SingularDesign(MemaError):
    """A regression design matrix is rank-deficient."""


class InitFailure(MemaError):
    """No finite-density starting point was found for a sampler chain."""


class NonFiniteDensity(MemaError):
    """The target log density evaluated to NaN during sampling."""


class InsufficientDraws(MemaError):
    """Too few chains or retained draws for the requested summary."""


class EmptyRegion(MemaError):
    """No candidate value satisfies the identification constraints."""


class DegenerateInput(MemaError):
    """Input has no variation where variation is required."""


class NoCleanStudiesWarning(UserWarning):
    """Fit proceeds with zero gold-standard studies; the result is only
    partially identified and may be strongly prior-sensitive."""


class NonConvergenceWarning(UserWarning):
    """Chain diagnostics indicate the sampler may not have converged."""
