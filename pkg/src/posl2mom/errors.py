"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A requested discretization is inconsistent (e.g. fewer nodes than moments)."""


class NonPhysicalStateError(ValueError):
    """Moments imply a non-positive density or temperature."""


class EntropyFailureError(RuntimeError):
    """The dual Newton solve for the discrete Maxwellian did not converge."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class ClosureFailureError(RuntimeError):
    """The positivity-constrained closure failed in an evolution run."""

    def __init__(self, message, cell=None, step=None, moments=None):
        super().__init__(message)
        self.cell = cell
        self.step = step
        self.moments = moments


class CflViolationError(RuntimeError):
    """A transport step was attempted outside the stable/feasible time-step range."""


class ConditioningError(RuntimeError):
    """A linear system required by a closure is numerically singular."""


class UndefinedMetricError(ValueError):
    """An error metric has a vanishing reference denominator."""
