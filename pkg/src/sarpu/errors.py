"""Exception types raised across the package."""


class SarpuError(Exception):
    """Base class for all package errors."""


class InputError(SarpuError, ValueError):
    """Malformed or out-of-range input."""


class DegenerateDataError(SarpuError, ValueError):
    """Data carries no usable signal (all weights zero, no labels, ...)."""


class MissingAssignmentError(SarpuError, KeyError):
    """An oracle propensity was queried on an assignment it does not define."""


class SchemaError(SarpuError, ValueError):
    """A CSV or config document does not match the expected layout."""


class MechanismError(SarpuError, ValueError):
    """A labeling mechanism cannot be applied to the given data."""


class ConfigError(SarpuError, ValueError):
    """An experiment configuration is invalid."""


class ParseError(SchemaError):
    """A CSV cell could not be parsed; the message names its row and column."""


class ConsistencyError(SchemaError):
    """PU labels contradict ground truth (a labeled row that is negative)."""


class MissingTruthError(SarpuError, ValueError):
    """An operation needs ground-truth classes that the dataset lacks."""
