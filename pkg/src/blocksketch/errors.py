"""Exception types raised across the package."""


class BlockSketchError(Exception):
    pass


class DimensionError(BlockSketchError, ValueError):
    pass


class RankError(BlockSketchError, ValueError):
    pass


class PreconditionError(BlockSketchError, ValueError):
    pass


class CapacityError(BlockSketchError):
    pass


class ClosureError(BlockSketchError):
    pass


class ConvergenceError(BlockSketchError, RuntimeError):
    """Power iteration hit its iteration cap; ``estimate`` holds the last value."""

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


class DivergenceError(BlockSketchError, RuntimeError):
    """An iterative solver blew up; ``state`` holds the history recorded so far."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state
