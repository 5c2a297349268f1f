"""Exception hierarchy shared by all modules."""


class MarketStatesError(ValueError):
    """Base class for every error raised by this package."""


class DataError(MarketStatesError):
    """Invalid price/return input or an impossible train/test split."""


class FeatureError(MarketStatesError):
    """Feature construction or standardization failure."""


class ClusteringError(MarketStatesError):
    """K-Means could not be fitted or applied."""


class StateMachineError(MarketStatesError):
    """Invalid label sequence, counts, or per-state statistics."""


class PipelineError(MarketStatesError):
    """A failure inside an end-to-end run, tagged with the stage that raised it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.message = message
