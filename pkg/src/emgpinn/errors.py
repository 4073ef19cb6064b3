"""Exception types raised across the package."""


class EmgPinnError(Exception):
    """Base class for all package errors."""


class ConfigError(EmgPinnError, ValueError):
    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class ShapeMismatch(EmgPinnError, ValueError):
    pass


# dynamics
class SingularMassMatrix(EmgPinnError, ArithmeticError):
    pass


class NonFinite(EmgPinnError, ArithmeticError):
    pass


class InvalidAnthropometrics(EmgPinnError, ValueError):
    pass


# signals
class NyquistViolation(EmgPinnError, ValueError):
    pass


class NonPositiveMvc(EmgPinnError, ValueError):
    pass


class TooShort(EmgPinnError, ValueError):
    pass


class NoOverlap(EmgPinnError, ValueError):
    pass


# autodiff / training
class NonFiniteLoss(EmgPinnError, ArithmeticError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message)


class EmptyBatch(EmgPinnError, ValueError):
    pass


class EmptyDataset(EmgPinnError, ValueError):
    pass


# data
class SchemaError(EmgPinnError, ValueError):
    def __init__(self, message, row=None, column=None, path=None):
        self.row = row
        self.column = column
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class NonUniformSampling(SchemaError):
    pass


class InsufficientRuns(EmgPinnError, ValueError):
    pass


# eval
class LengthMismatch(EmgPinnError, ValueError):
    pass


class Empty(EmgPinnError, ValueError):
    pass


class ConstantInput(EmgPinnError, ValueError):
    pass
