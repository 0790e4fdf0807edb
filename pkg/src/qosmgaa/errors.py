"""Exception types shared across the toolkit."""


class QosError(Exception):
    """Base class for all toolkit errors."""


class ParseError(QosError, ValueError):
    """A source file line could not be parsed; message names the line."""


class ShapeError(QosError, ValueError):
    """Array/matrix dimensions are inconsistent or degenerate."""


class DomainError(QosError, ValueError):
    """A numeric argument lies outside its allowed domain."""


class ConflictError(QosError, ValueError):
    """Duplicate identifier in an input file."""


class SaturationError(QosError, RuntimeError):
    """Graph too dense to place the requested number of replacement edges."""


class DivergenceError(QosError, RuntimeError):
    """Training produced a non-finite loss."""
