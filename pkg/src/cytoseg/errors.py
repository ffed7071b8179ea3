"""Exception hierarchy shared by all cytoseg modules."""


class CytosegError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(CytosegError, ValueError):
    """A tuning parameter (window, threshold, step size...) is out of range."""


class InvalidInputError(CytosegError, ValueError):
    """An image, mask or stack does not satisfy an operation's precondition."""


class NoValidThresholdError(CytosegError):
    """A histogram has fewer than two occupied bins, so no cut separates it."""


class NumericalInstabilityError(CytosegError):
    """A level-set update produced non-finite values."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite level-set values after step {step}")


class GenerationFailureError(CytosegError):
    """The synthetic generator could not satisfy its geometric constraints."""
