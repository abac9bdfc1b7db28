"""Exception types shared across the package."""


class FloodError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(FloodError, ValueError):
    """Array shapes or sizes incompatible with an operation's contract."""


class NumericalFailureError(FloodError):
    """Solver state became non-finite or blew past the velocity guard."""

    def __init__(self, message, cell=None, sim_time=None):
        super().__init__(message)
        self.cell = cell
        self.sim_time = sim_time


class StagnationError(FloodError):
    """Adaptive sub-stepping exceeded the per-interval step budget."""


class InsufficientDataError(FloodError, ValueError):
    """Snapshot series too short for the requested lookahead window."""


class RolloutFailureError(FloodError):
    """Surrogate produced a non-finite prediction during rollout."""

    def __init__(self, message, pass_index=None):
        super().__init__(message)
        self.pass_index = pass_index


class TapeReuseError(FloodError, RuntimeError):
    """A tape was extended or replayed after its backward pass."""


class ConfigError(FloodError, ValueError):
    """Invalid or unknown configuration key/value."""
