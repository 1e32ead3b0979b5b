"""Exception hierarchy shared by every module."""


class NMixError(Exception):
    """Base class for all package errors."""


class DomainError(NMixError, ValueError):
    """An argument lies outside the support of a distribution."""


class InsufficientDataError(NMixError, ValueError):
    pass


class InfeasibleSupportError(NMixError, ValueError):
    """Observed report count exceeds the candidate maximum target count."""


class DegenerateModelError(NMixError, ArithmeticError):
    """P(K = 0) is numerically 1, so the zero-truncated model is undefined."""


class EmptyDataError(NMixError, ValueError):
    pass


class ParseError(NMixError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonConvergenceError(NMixError, RuntimeError):
    """Every optimizer run failed to converge.

    The best partial result is kept on ``best`` so callers can still inspect it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class UnreliableBootstrapWarning(UserWarning):
    pass
