"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """An argument violates a documented precondition (shape, finiteness, sign)."""


class DegenerateInput(ValueError):
    """Input is structurally valid but too degenerate to act on (e.g. all cells masked)."""


class NumericalFailure(RuntimeError):
    """A numerical routine produced non-finite values."""


class TuningFailure(RuntimeError):
    """Cross-validation could not score any candidate on the grid."""


class FormatError(ValueError):
    """A file does not conform to the expected on-disk format."""


class ConfigError(ValueError):
    """A run configuration is inconsistent or references unknown fields."""


class RankOverflowWarning(UserWarning):
    """Selected rank is at or above the theoretical ceiling min(m, T) - 1."""
