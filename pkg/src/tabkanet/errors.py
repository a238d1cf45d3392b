"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes: configuration problems exit 1,
data/schema problems exit 2, training divergence exits 3.
"""


class TabKANetError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ShapeError(TabKANetError, ValueError):
    pass


class BatchTooSmallError(TabKANetError, ValueError):
    pass


class GradCheckError(TabKANetError, ArithmeticError):
    pass


class ConfigError(TabKANetError, ValueError):
    exit_code = 1


class UnsupportedArchitectureError(ConfigError):
    pass


class DataError(TabKANetError, ValueError):
    exit_code = 2


class SchemaError(DataError):
    pass


class LabelError(DataError):
    pass


class LeakageError(DataError):
    """A fit routine was handed validation or test rows."""


class UndefinedMetricError(TabKANetError, ValueError):
    exit_code = 2


class DivergenceError(TabKANetError, ArithmeticError):
    exit_code = 3
