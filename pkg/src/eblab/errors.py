"""Exception types shared across eblab."""


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class BracketError(ValueError):
    """Root bracket without a sign change."""


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted; carries the best estimate found."""

    def __init__(self, message, best_estimate=None, error_estimate=None):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.error_estimate = error_estimate


class ModelError(RuntimeError):
    """A model evaluation failed (non-finite marginal, empty likelihood, ...)."""

    def __init__(self, message, offending=None):
        super().__init__(message)
        self.offending = offending


class CapacityError(ValueError):
    """Requested size exceeds what double precision can represent."""

    def __init__(self, message, max_feasible=None):
        super().__init__(message)
        self.max_feasible = max_feasible


class ConfigError(ValueError):
    """Invalid scenario configuration. ``key`` names the offending field."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ScenarioError(RuntimeError):
    """Too many replication failures in a scenario run."""
