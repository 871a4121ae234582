"""Exception hierarchy shared across the package.

Validation failures subclass ``ValueError`` so callers that only care
about "bad input" can catch one type; ``NumericalCollapseError`` is kept
separate because it signals a diverged sampler, not a caller mistake.
"""


class EnetmixError(Exception):
    """Base class for all package-specific errors."""


class ParameterDomainError(EnetmixError, ValueError):
    """A distribution or transform received a parameter outside its domain."""


class ResponseDomainError(EnetmixError, ValueError):
    """A response value is outside the domain required by the transform.

    Carries ``row`` (0-based index of the first offending row) when known.
    """

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ShapeError(EnetmixError, ValueError):
    """Dimension mismatch between arrays that must agree."""


class NonPositiveDefiniteError(EnetmixError, ValueError):
    """A matrix required to be positive definite failed factorization.

    ``minor`` is the 1-based order of the leading minor that is not
    positive definite, as reported by the Cholesky routine.
    """

    def __init__(self, message, minor=None):
        super().__init__(message)
        self.minor = minor


class DegenerateTruncationError(EnetmixError, ValueError):
    """Truncated distribution has numerically zero mass on its support."""


class NumericalCollapseError(EnetmixError, RuntimeError):
    """Every candidate in a categorical update had zero probability.

    When raised from the chain driver, ``iteration`` is the 1-based sweep
    index that failed and ``last_good_state`` the state before the sweep.
    """

    def __init__(self, message, iteration=None, last_good_state=None):
        super().__init__(message)
        self.iteration = iteration
        self.last_good_state = last_good_state


class EmptyMaskError(EnetmixError, ValueError):
    """No pattern index reached the requested energy threshold."""


class EmptyModelError(EnetmixError, ValueError):
    """The fitted model has no occupied mixture component."""


class IngestionError(EnetmixError, ValueError):
    """A data file failed to parse or validate; message cites the line."""


class AdapterError(EnetmixError, RuntimeError):
    """The black-box subprocess adapter failed or returned malformed output."""


class PersistenceError(EnetmixError, ValueError):
    """A stored artifact is truncated, corrupt, or schema-incompatible."""


class ConfigError(EnetmixError, ValueError):
    """A run configuration is missing fields or fails validation."""
