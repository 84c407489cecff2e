class GridMismatchError(ValueError):
    """Two fields live on different grids."""


class NumericalAbort(RuntimeError):
    """A time integration produced NaN/Inf or left its conservation window."""


class CapExceededError(ValueError):
    """A basis or dense matrix would exceed the configured size cap."""


class TailGuardError(ValueError):
    """A truncated Fock computation is too close to the truncation edge."""


class ConvergenceError(RuntimeError):
    """An iterative propagator did not meet its tolerance within its budget."""
