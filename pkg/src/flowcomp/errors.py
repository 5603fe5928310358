"""Exception types raised across the package."""


class FlowcompError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(FlowcompError, ValueError):
    """An argument violates a documented precondition."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NumericDomainError(FlowcompError, ValueError):
    """A numeric input is NaN/inf or otherwise outside the domain of the operation."""


class InvalidDataError(FlowcompError, ValueError):
    """Measured data cannot be used (e.g. a non-positive cost weight)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DivergenceError(FlowcompError, ArithmeticError):
    """Forward simulation left the state bound."""

    def __init__(self, step, bound):
        super().__init__(f"simulation diverged at step {step} (|x| > {bound:g})")
        self.step = step
        self.bound = bound


class ParseError(FlowcompError, ValueError):
    """A data or config file is malformed."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line
