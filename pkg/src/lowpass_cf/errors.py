"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to:
2 configuration, 3 data/evaluation, 4 capacity.
"""


class LowpassCFError(Exception):
    exit_code = 1


class ParameterError(LowpassCFError, ValueError):
    exit_code = 2


class FormatError(ParameterError):
    """Unknown or unsupported input format token."""


class DataError(LowpassCFError, ValueError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptyDatasetError(DataError):
    pass


class EmptyEvaluationError(DataError):
    pass


class ChecksumError(DataError):
    pass


class DomainError(DataError):
    """A numeric value outside the domain an operation is defined on."""


class ShapeError(DataError):
    pass


class FitError(DataError):
    pass


class CapacityError(LowpassCFError, MemoryError):
    exit_code = 4
