"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array shapes disagree with a layer, net or trace."""


class InfeasibleConstraintError(ValueError):
    """A kernel has more output features than rows of its matricization allow."""


class ParseError(ValueError):
    """A dataset file does not follow the documented layout."""


class SplitError(ValueError):
    """A class is missing from a partition required by the split protocol."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given labels (e.g. one class only)."""


class StageOrderError(RuntimeError):
    """A pipeline stage was invoked before the stage it depends on."""


class ConfigError(ValueError):
    """A configuration file has an unknown key or a value of the wrong type."""
