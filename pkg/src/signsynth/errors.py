"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor extents incompatible with the requested operation."""


class ConfigError(ValueError):
    """Invalid, inconsistent, or unknown configuration values."""


class DataError(ValueError):
    """Malformed input data or violated generation constraints."""


class NonFiniteError(ArithmeticError):
    """NaN or Inf encountered where finite values are required."""


class TrainingDiverged(RuntimeError):
    """Training loss became non-finite or ran away from its starting level.

    Carries the last good checkpoint path when one was written.
    """

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class SamplingError(RuntimeError):
    """Sampler produced a non-finite latent.  Carries the failing step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
