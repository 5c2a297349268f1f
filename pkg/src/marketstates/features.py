"""Multi-horizon log-momentum and rolling-risk features.

For a horizon ``t`` and day ``T`` both features look at the trailing window of
exactly ``t`` log-returns ending at (and including) day ``T``:

    Mom_t(T)  = sum(r[T-t+1 .. T])           = log(P_T / P_{T-t})
    Risk_t(T) = sqrt(mean((r - mean(r))**2))  over the same window
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from datetime import date
from typing import Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from marketstates.config import DEFAULT_HORIZONS
from marketstates.errors import FeatureError
from marketstates.marketdata import ReturnSeries

ReturnsLike = Union[ReturnSeries, Sequence[float], np.ndarray]


def _as_array(r: ReturnsLike) -> np.ndarray:
    if isinstance(r, ReturnSeries):
        return r.returns
    return np.asarray(r, dtype=float)


def _window(r: ReturnsLike, horizon: int, at: int) -> np.ndarray:
    values = _as_array(r)
    if horizon < 1:
        raise FeatureError("horizon must be a positive integer")
    if at < 0:
        at += len(values)
    if at >= len(values) or at < horizon - 1:
        raise FeatureError(f"insufficient history for horizon {horizon} at index {at}")
    return values[at - horizon + 1 : at + 1]


def momentum(r: ReturnsLike, horizon: int, at: int) -> float:
    """Sum of the ``horizon`` log-returns ending at index ``at`` (negative indices allowed)."""
    return float(np.sum(_window(r, horizon, at)))


def risk(r: ReturnsLike, horizon: int, at: int) -> float:
    """Population standard deviation of the ``horizon`` returns ending at ``at``."""
    w = _window(r, horizon, at)
    return float(np.sqrt(np.mean((w - w.mean()) ** 2)))


def column_names(horizons: Sequence[int]) -> list[str]:
    names = []
    for h in horizons:
        names += [f"Mom_{h}", f"Risk_{h}"]
    return names


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Per-day feature rows; columns ``[Mom_h1, Risk_h1, Mom_h2, Risk_h2, ...]``."""

    dates: tuple[date, ...]
    values: np.ndarray
    horizons: tuple[int, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        if values.ndim != 2 or values.shape[0] != len(self.dates):
            raise FeatureError("feature values must be a (n_dates, n_columns) array")
        if values.shape[1] != 2 * len(self.horizons):
            raise FeatureError("column count must be twice the number of horizons")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def columns(self) -> list[str]:
        return column_names(self.horizons)

    def momentum_columns(self) -> np.ndarray:
        return self.values[:, 0::2]

    def risk_columns(self) -> np.ndarray:
        return self.values[:, 1::2]

    def with_values(self, values: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(self.dates, values, self.horizons)

    def select(self, mask) -> "FeatureMatrix":
        idx = np.flatnonzero(np.asarray(mask))
        return FeatureMatrix(tuple(self.dates[i] for i in idx), self.values[idx], self.horizons)

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(",".join(["date"] + self.columns) + "\n")
            for d, row in zip(self.dates, self.values):
                fh.write(d.isoformat() + "," + ",".join(repr(float(v)) for v in row) + "\n")


def build_features(r: ReturnSeries, horizons: Sequence[int] = DEFAULT_HORIZONS) -> FeatureMatrix:
    """Feature rows for every date with a full window at the longest horizon.

    The first ``max(horizons) - 1`` dates are dropped as warm-up, so the result
    has ``len(r) - max(horizons) + 1`` rows aligned with ``r.dates[max(horizons)-1:]``.
    """
    horizons = tuple(int(h) for h in horizons)
    if not horizons or any(h < 1 for h in horizons):
        raise FeatureError("horizons must be positive integers")
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise FeatureError("horizons must be strictly increasing")
    values = r.returns
    n, hmax = len(values), horizons[-1]
    if n <= hmax:
        raise FeatureError(f"series of {n} returns is too short for horizon {hmax}")

    n_rows = n - hmax + 1
    out = np.empty((n_rows, 2 * len(horizons)))
    for j, h in enumerate(horizons):
        windows = sliding_window_view(values, h)[hmax - h :]
        out[:, 2 * j] = windows.sum(axis=1)
        out[:, 2 * j + 1] = np.sqrt(np.mean((windows - windows.mean(axis=1, keepdims=True)) ** 2, axis=1))
    return FeatureMatrix(r.dates[hmax - 1 :], out, horizons)


@dataclass(frozen=True, eq=False)
class StandardizationParams:
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        stds = np.asarray(self.stds, dtype=float)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)
        if means.shape != stds.shape or means.ndim != 1:
            raise FeatureError("means and stds must be 1-D with equal length")
        if np.any(~(stds > 0)):
            raise FeatureError("standard deviations must be strictly positive")

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationParams":
        return cls(np.array(d["means"], dtype=float), np.array(d["stds"], dtype=float))


def fit_standardizer(m: FeatureMatrix) -> StandardizationParams:
    if len(m) < 2:
        raise FeatureError("need at least 2 rows to fit a standardizer")
    means = m.values.mean(axis=0)
    stds = np.sqrt(np.mean((m.values - means) ** 2, axis=0))
    for name, s in zip(m.columns, stds):
        if not s > 0:
            raise FeatureError(f"zero-variance column {name}")
    return StandardizationParams(means, stds)


def _check_dims(params: StandardizationParams, ncols: int) -> None:
    if len(params.means) != ncols:
        raise FeatureError(f"dimension mismatch: params have {len(params.means)} columns, data has {ncols}")


def apply_standardizer(params: StandardizationParams, m: FeatureMatrix) -> FeatureMatrix:
    _check_dims(params, m.values.shape[1])
    return m.with_values((m.values - params.means) / params.stds)


def invert_standardizer(params: StandardizationParams, m: FeatureMatrix) -> FeatureMatrix:
    _check_dims(params, m.values.shape[1])
    return m.with_values(m.values * params.stds + params.means)
