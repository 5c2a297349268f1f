"""Market regime modeling with momentum/risk clustering and probabilistic state machines."""

from marketstates.errors import (
    ClusteringError,
    DataError,
    FeatureError,
    MarketStatesError,
    PipelineError,
    StateMachineError,
)

__version__ = "0.1.0"

__all__ = [
    "ClusteringError",
    "DataError",
    "FeatureError",
    "MarketStatesError",
    "PipelineError",
    "StateMachineError",
    "__version__",
]
