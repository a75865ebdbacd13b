"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, failed plant-assumption audits with 3, and divergence or tracking
failures with 4.
"""


class DimensionError(ValueError):
    """Matrix or signal dimensions are inconsistent; the message names the offending dimension."""


class ConfigError(ValueError):
    """A scenario file, CLI flag combination or parameter file is invalid."""


class AssumptionError(RuntimeError):
    """A structural plant assumption (minimum phase, interactor, observability, minors) fails."""


class MatchingError(RuntimeError):
    """No plant-model matching solution at the requested filter order, or verification failed."""


class DivergenceError(RuntimeError):
    """A closed-loop signal left the divergence guard during simulation."""
