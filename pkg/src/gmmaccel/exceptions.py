"""Exception types raised by the fitting routines."""


class GmmError(Exception):
    """Base class for all library errors."""


class InvalidInputError(GmmError, ValueError):
    """Malformed user input: non-finite values, shape or dimension mismatch."""


class DegenerateComponentError(GmmError):
    """A component collapsed: zero responsibility mass or a covariance that
    stays non-positive-definite after one jitter attempt."""


class AllComponentsKilledError(GmmError):
    """The adaptive weight update annihilated every component in one sweep."""


class NumericalFailureError(GmmError):
    """A run aborted mid-iteration (e.g. unguarded acceleration produced an
    unusable iterate).  Carries the partial trace when available."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
