"""Exception hierarchy shared across the package.

The CLI maps ValidationError to exit code 1 and NumericError to exit
code 2; library code raises, never calls sys.exit.
"""


class LamafieldError(Exception):
    """Base class for all package errors."""


class ValidationError(LamafieldError, ValueError):
    """Invalid parameters, mesh, or input data."""


class NumericError(LamafieldError, ArithmeticError):
    """A numerical procedure failed to reach its accuracy contract."""


class OverflowSignal(NumericError):
    """Result not representable in double precision; use the log-variant."""


class PoleError(NumericError):
    """Evaluation at a pole of an unbounded density."""


class SingularityError(NumericError):
    """Evaluation at a singular point of a kernel."""
