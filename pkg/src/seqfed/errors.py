"""Exception hierarchy. Each family maps to one CLI exit code."""


class ConfigError(ValueError):
    """Invalid configuration value; the message names the offending field."""

    exit_code = 1


class DataError(ValueError):
    """Dataset, checkpoint or stream contents are unusable."""

    exit_code = 2


class NumericalError(ArithmeticError):
    """Non-finite loss, gradient or parameter encountered during training."""

    exit_code = 3
