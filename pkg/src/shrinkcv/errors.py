"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Arguments violate a documented precondition."""


class NumericalFailureError(ArithmeticError):
    """A factorization or guarded denominator broke down."""


class GenerationFailureError(RuntimeError):
    """A randomized construction did not succeed within its retry budget."""


class ConfigError(InvalidInputError):
    """An experiment configuration file is malformed or has unknown keys."""
