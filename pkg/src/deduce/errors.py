"""Exception types; the CLI maps each to a distinct exit status."""


class DeduceError(Exception):
    exit_code = 1


class ConfigError(DeduceError, ValueError):
    exit_code = 2


class DataError(DeduceError, ValueError):
    exit_code = 3


class NumericalError(DeduceError, ArithmeticError):
    exit_code = 4
