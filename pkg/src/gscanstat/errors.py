"""Exception hierarchy shared across the package."""


class GscanstatError(Exception):
    """Base class for all package-specific errors."""


class MissingCell(GscanstatError):
    """An (area, period) combination is absent from the input data."""


class DuplicateCell(GscanstatError):
    """An (area, period) combination appears more than once in the input."""


class NonPositiveExpected(GscanstatError):
    """An expected count is zero or negative."""


class DegenerateInput(GscanstatError):
    """Input is structurally valid but makes the requested computation meaningless."""


class UnknownArea(GscanstatError):
    """A file references an area id that is not part of the study region."""


class WindowCoversAll(GscanstatError):
    """A scan window contains the entire expected mass; the statistic is undefined."""


class InfeasibleConstraints(GscanstatError):
    """Linear constraints cannot be satisfied on the sampling subspace."""


class NumericalOverflow(GscanstatError):
    """A linear predictor or likelihood term left the representable range."""


class NoConvergence(GscanstatError):
    """An iterative fit exhausted its iteration budget."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
