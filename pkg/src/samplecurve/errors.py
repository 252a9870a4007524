"""Exception hierarchy.

``InputError`` covers malformed or degenerate user inputs (CLI exit code 1);
everything else raised by the library is a runtime failure (exit code 2).
"""


class SampleCurveError(Exception):
    """Base class for all library errors."""


class InputError(SampleCurveError, ValueError):
    """Malformed, inconsistent, or degenerate input data."""


class NumericalError(SampleCurveError, ArithmeticError):
    """Numerical blow-up inside an iterative solver."""
