"""Exception hierarchy for the generative_invariance package."""


class GIError(Exception):
    """Base class for all package errors."""


class SchemaError(GIError):
    """A required CSV column is missing or the header is malformed."""


class ParseError(GIError):
    """A CSV cell could not be parsed as a number; names the row and column."""


class EmptyInputError(GIError):
    """The input file or array contains no data rows."""


class IdentifiabilityError(GIError):
    """The weighted outer-product matrix of environment means is rank deficient.

    Carries the :class:`~generative_invariance.estimator.RankReport` that
    triggered the failure in ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DegenerateCovariatesError(GIError):
    """A covariate second-moment matrix is numerically singular."""


class SingularCovarianceError(GIError):
    """A covariance matrix that must be positive definite is not."""


class InsufficientTestSampleError(GIError):
    """The test covariate sample is too small to estimate its moments."""


class EllipsoidViolationError(GIError):
    """The fitted confounding vector lies outside the admissible ellipsoid."""


class NotEnoughSourcesError(GIError):
    """Fewer environments available than the requested subset size."""


class SelectionInfeasibleError(GIError):
    """Source selection cannot proceed (too few environments or no
    identifiable subset on one side of the split)."""
