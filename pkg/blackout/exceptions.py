"""
Exceptions used within blackout
"""


class BlackoutError(Exception):
    """Base class of every error raised deliberately by blackout"""

    pass


class DomainError(BlackoutError, ValueError):
    """Raised when an argument lies outside the domain of an operation, e.g.
    a negative time or a state label larger than the state space allows.
    """

    pass


class UnreachableStateError(BlackoutError):
    """Raised when conditioning on a state whose probability is (numerically)
    zero.
    """

    pass


class InconsistencyError(BlackoutError):
    """Raised when an observation has zero likelihood under every item of a
    dataset.
    """

    pass


class ShapeError(BlackoutError, ValueError):
    pass


class FormatError(BlackoutError, ValueError):
    """Raised when a dataset, sample, generator or model file is malformed"""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super(FormatError, self).__init__(message)
        self.line_no = line_no


class ConvergenceError(BlackoutError):
    """Raised when an adaptive substep loop exceeds its step cap"""

    pass
