"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError (and
subclasses) -> 3, NumericError -> 4.
"""


class ConfigError(ValueError):
    """Invalid run configuration (bad ratios, missing fields, empty grid)."""


class DataError(ValueError):
    """Rejected input: malformed graphs, shape mismatches, unknown ids."""


class NumericError(ArithmeticError):
    """Non-finite values where finite numbers are required, or divergence."""


class MetricUndefinedError(DataError):
    """A metric has no defined value on the given targets (e.g. AUC with a
    single-class target set)."""


class CheckpointError(DataError):
    """Checkpoint cannot be loaded or does not match the target model."""
