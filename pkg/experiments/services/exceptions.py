class SolverError(RuntimeError):
    """Base class for every error raised by the numerical services."""


class InvalidArgumentError(SolverError, ValueError):
    pass


class NonConvergenceError(SolverError):
    """The nonlinear stage iteration hit its cap without meeting the tolerance."""

    def __init__(self, message: str, residual: float, iterations: int, step_index=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.step_index = step_index

    def diagnostics(self) -> dict:
        return {
            'error': str(self),
            'residual': self.residual,
            'iterations': self.iterations,
            'step_index': self.step_index,
        }


class MissingReferenceError(SolverError, LookupError):
    pass


class SnapshotError(SolverError, LookupError):
    pass
