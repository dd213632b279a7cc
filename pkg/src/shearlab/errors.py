"""Exception hierarchy.

Each class carries the process exit code the command-line front end uses
when the error escapes a subcommand.
"""


class ShearLabError(Exception):
    exit_code = 1


class ConfigurationError(ShearLabError, ValueError):
    exit_code = 4


class DataError(ConfigurationError):
    """Malformed or non-physical input data (e.g. nonpositive rates)."""


class StructuralError(ShearLabError):
    """A shear flow violates a structural hypothesis."""

    exit_code = 2


class DegenerateFlowError(StructuralError):
    pass


class NumericalError(ShearLabError, ArithmeticError):
    exit_code = 3


class TruncationError(NumericalError):
    """Solution mass reached the edge of a truncated computational box."""


class InsufficientDecayError(NumericalError):
    pass


class ConstantsTooLargeError(NumericalError):
    pass
