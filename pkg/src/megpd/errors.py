"""Exception types shared across the package."""


class MegpdError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(MegpdError, ValueError):
    """A parameter violates its documented invariant."""


class DomainError(MegpdError, ValueError):
    """An argument lies outside the support of a function."""


class DataError(MegpdError, ValueError):
    """Input data are empty, degenerate, or too small for the requested operation."""


class InsufficientDataError(DataError):
    pass


class DegenerateDataError(DataError):
    pass


class ParseError(MegpdError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TrainingDivergedError(MegpdError, RuntimeError):
    """Training risk became non-finite."""


class ModelFileError(MegpdError):
    pass


class CorruptModelError(ModelFileError):
    pass


class VersionMismatchError(ModelFileError):
    pass


class PriorMismatchError(MegpdError, ValueError):
    pass
