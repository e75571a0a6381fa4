"""Exception hierarchy shared across the package.

The CLI maps each category to its own exit code (see ``cli.EXIT_CODES``).
"""


class HydroDIError(Exception):
    """Base class for all package errors."""


class ShapeError(HydroDIError, ValueError):
    pass


class ParameterError(HydroDIError, ValueError):
    pass


class DomainError(HydroDIError, ValueError):
    pass


class WindowError(HydroDIError, IndexError):
    pass


class StateError(HydroDIError, RuntimeError):
    pass


class NumericError(HydroDIError, ArithmeticError):
    """A non-finite value appeared where finite numbers are required."""


class FitError(HydroDIError, ValueError):
    pass


class DataError(HydroDIError):
    pass


class ConfigError(HydroDIError):
    pass
