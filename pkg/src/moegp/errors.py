"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """Inputs violate a documented precondition (shape, range, finiteness)."""


class NumericalError(ArithmeticError):
    """A factorization or optimization failed numerically.

    ``last_state`` carries whatever finite state was available when the
    failure happened (e.g. the last finite parameter vector), or None.
    """

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class ParseError(ValueError):
    """A data file could not be parsed; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
