"""Exception types shared across the package."""


class HawkesError(Exception):
    """Base class for all package errors."""


class ArgumentError(HawkesError, ValueError):
    """Invalid argument (bad index, negative time, malformed input)."""


class StationarityError(HawkesError):
    """A computation requires a branching ratio < 1 and the input violates it."""


class NumericalError(HawkesError):
    """An iterative or linear-algebra routine failed to produce a result."""


class EstimationError(HawkesError):
    """A statistical estimator received data it cannot work with."""


class DegenerateKernelError(HawkesError):
    """Operation undefined for an (entrywise) zero kernel or zero statistic."""


class DivergenceError(HawkesError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class TruncationError(HawkesError):
    """Simulation hit the event cap; carries the partial stream."""

    def __init__(self, message, stream=None):
        super().__init__(message)
        self.stream = stream
