"""Default numeric settings. Nothing in the pipeline hard-codes these values."""

from __future__ import annotations

from dataclasses import dataclass

DEFAULT_HORIZONS: tuple[int, ...] = (5, 10, 20, 30, 40, 50)

#: Minimum number of test returns left after the training window.
MIN_TEST_DAYS = 30

#: Training windows must hold at least ``max(horizons) + TRAIN_ROWS_PER_STATE * k`` returns.
TRAIN_ROWS_PER_STATE = 10


@dataclass(frozen=True)
class KMeansSettings:
    restarts: int = 10
    max_iter: int = 300
    tol: float = 1e-6


@dataclass(frozen=True)
class MetricSettings:
    """Histogram KL settings and the size of the model sample drawn per comparison."""

    bins: int = 200
    epsilon: float = 1e-10
    n_model_min: int = 100_000
    n_model_factor: int = 10

    def n_model(self, n_test: int) -> int:
        return max(self.n_model_min, self.n_model_factor * n_test)


@dataclass(frozen=True)
class TagThresholds:
    """Thresholds for naming regimes from de-standardized centroids.

    Momenta are compared as z-scores ``Mom_h / (ref_sigma * sqrt(h))`` and the
    risk level as ``mean(Risk_h) / ref_sigma``, where ``ref_sigma`` is the
    pooled daily volatility of the training returns.
    """

    crisis_momentum: float = -2.0
    crisis_risk: float = 2.5
    recovery_risk: float = 1.5
    flat_momentum: float = 0.3
    low_risk: float = 0.75
    trend_momentum: float = 0.25
    expansion_risk: float = 1.25
