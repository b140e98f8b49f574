"""Exception types shared across the package.

Each class carries the process exit code the command line maps it to.
"""


class ElsrgmError(Exception):
    exit_code = 1


class InputError(ElsrgmError, ValueError):
    """Malformed or out-of-range user input."""

    exit_code = 2


class UnsupportedError(ElsrgmError):
    """Requested size or dimension is beyond what is implemented."""

    exit_code = 3


class NumericalError(ElsrgmError, ArithmeticError):
    """A numerical routine failed to produce a finite answer."""

    exit_code = 4
