class DecPomdpError(ValueError):
    """Invalid model, controller or belief."""


class ParseError(DecPomdpError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnreachableObservationError(DecPomdpError):
    """Raised when a belief update conditions on a zero-probability observation."""


class CapacityError(RuntimeError):
    """A configured size or time budget would be exceeded.

    ``partial`` carries whatever result was produced before the limit hit,
    typically ``(controller, log)``.
    """

    def __init__(self, message, partial=None, reason="capacity"):
        super().__init__(message)
        self.partial = partial
        self.reason = reason


class SolverError(RuntimeError):
    """The LP or linear solver failed where failure should be impossible."""
