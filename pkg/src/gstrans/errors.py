"""Exception types shared across the package."""


class InsufficientDataError(ValueError):
    """Not enough samples to estimate the requested statistic."""


class IngestionError(RuntimeError):
    """A dataset file is missing, truncated, or malformed."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"training diverged at step {step}")
