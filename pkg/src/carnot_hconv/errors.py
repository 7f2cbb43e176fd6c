class ConvergenceError(RuntimeError):
    """An iterative solve stopped before reaching its tolerance.

    ``residual`` is the last relative residual; ``report`` carries the solver
    diagnostics when available.
    """

    def __init__(self, message: str, residual: float = float("nan"), report=None):
        super().__init__(message)
        self.residual = residual
        self.report = report


class ConfigError(ValueError):
    """Bad or incomplete run configuration."""
