"""Exception hierarchy shared by every cmflow module."""


class CMFlowError(Exception):
    """Base class for all errors raised by cmflow."""


class EventParseError(CMFlowError, ValueError):
    """A line of an event text file could not be parsed."""

    def __init__(self, message, line_number=None, path=None):
        self.line_number = line_number
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line_number is not None:
            where += f"{line_number}: "
        elif where:
            where += " "
        super().__init__(where + message)


class EmptySliceError(CMFlowError, ValueError):
    """An operation that needs events received none."""


class GeometryError(CMFlowError, ValueError):
    """Array shapes or sensor sizes disagree."""


class StabilityError(CMFlowError, ArithmeticError):
    """An explicit PDE step violated the CFL bound or produced non-finite values."""

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)


class DegenerateInputError(CMFlowError, ValueError):
    """The objective is undefined for this input (e.g. zero-flow sharpness is 0)."""


class UndefinedMetricError(CMFlowError, ValueError):
    """A metric was requested on an empty mask or a zero-variance reference."""


class NumericalError(CMFlowError, ArithmeticError):
    """The optimizer met a non-finite cost or gradient."""
