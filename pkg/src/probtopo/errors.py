"""Exception hierarchy.

Every error raised by the library derives from :class:`ProbTopoError` and
carries the CLI exit code it maps to (1 = input, 2 = numeric, 3 = empty
result).
"""


class ProbTopoError(Exception):
    exit_code = 1


class InputError(ProbTopoError, ValueError):
    """Malformed or inconsistent input."""

    exit_code = 1


class GridSizeError(InputError):
    pass


class DomainError(InputError):
    """Operation requested outside the valid domain of the grid."""


class NumericError(ProbTopoError, ArithmeticError):
    exit_code = 2


class NormalizationError(NumericError):
    pass


class IntegrationError(NumericError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class EstimationError(NumericError):
    pass


class EmptyResultError(ProbTopoError):
    exit_code = 3


class EmptyDiagramError(EmptyResultError):
    pass


class EmptySelectionError(EmptyResultError):
    pass
