"""Exception hierarchy shared across the package."""


class DenseCorrError(Exception):
    """Base class for every error raised by densecorr."""


class ShapeError(DenseCorrError, ValueError):
    pass


class SizeError(DenseCorrError, ValueError):
    pass


class AxisError(DenseCorrError, ValueError):
    pass


class ConfigError(DenseCorrError, ValueError):
    pass


class DomainError(DenseCorrError, ValueError):
    pass


class DegenerateError(DenseCorrError, ArithmeticError):
    """Raised when a linear system has no unique solution (e.g. coplanar points)."""


class EstimationFailedError(DenseCorrError, RuntimeError):
    pass


class SelectionFailedError(DenseCorrError, RuntimeError):
    pass


class GenerationError(DenseCorrError, RuntimeError):
    pass


class TrainingError(DenseCorrError, RuntimeError):
    """Non-finite loss during training.

    Attributes
    ----------
    step : int
    pair_id : int
    """

    def __init__(self, message, step=None, pair_id=None):
        super().__init__(message)
        self.step = step
        self.pair_id = pair_id


class CheckpointError(DenseCorrError, ValueError):
    pass
