"""Exception hierarchy shared by all ergoflow modules."""


class ErgoflowError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ValidationError(ErgoflowError, ValueError):
    """Invalid input: bad parameters, malformed files, broken invariants."""

    exit_code = 2


class MeshParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(ErgoflowError, RuntimeError):
    """A numerical routine failed (non-convergence, integrator escape, ...)."""

    exit_code = 3


class SolverNotConverged(NumericalError):
    """Iterative solver hit its iteration cap.

    ``best`` carries whatever the solver considers its best iterate so callers
    can decide whether to use it.
    """

    def __init__(self, message, best=None, residuals=None):
        super().__init__(message)
        self.best = best
        self.residuals = residuals
