"""Exception hierarchy shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class BracketError(DomainError):
    """The supplied bracket does not contain a sign change."""


class EvaluationError(ArithmeticError):
    """A function evaluation produced a non-finite value."""


class GaugeOrderingError(DomainError):
    """A gauge transform would break the time-ordering constraint."""


class ConfigError(ValueError):
    """Solver or run options are inconsistent."""


class InitError(DomainError):
    """An initial point violates the model constraints."""


class FitError(ValueError):
    """Not enough support to fit a power law."""


class ParseError(ValueError):
    """A ratings file could not be parsed in strict mode."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number
