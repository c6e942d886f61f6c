"""Exception types shared across the package."""


class OutOfDomainError(ValueError):
    """A point or measure atom lies outside the closed unit square."""


class ConfigError(ValueError):
    """An experiment configuration file is malformed or inconsistent."""


class NumericalError(RuntimeError):
    """A linear solve or factorization produced an unusable result."""


class SolverFailure(NumericalError):
    """An iterative solver exhausted its iteration budget.

    Carries the best iterate found so far in ``best_coefficients``.
    """

    def __init__(self, message, best_coefficients=None):
        super().__init__(message)
        self.best_coefficients = best_coefficients
