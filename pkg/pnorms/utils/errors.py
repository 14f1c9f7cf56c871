class PNormError(Exception):
    """Base class for everything this package raises on purpose."""

    exit_code = 1


class ValidationError(PNormError, ValueError):
    """Bad input or a violated precondition."""

    exit_code = 2


class SolverFailure(PNormError):
    """The conic solver did not reach an optimal solution."""

    exit_code = 3

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
