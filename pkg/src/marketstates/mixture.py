"""Frequency-weighted Gaussian mixture of per-state return distributions."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from marketstates.errors import MarketStatesError
from marketstates.marketdata import ReturnSeries
from marketstates.regime import StateMachine


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    weights: np.ndarray
    mus: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mu = np.atleast_1d(np.asarray(self.mus, dtype=float))
        sd = np.atleast_1d(np.asarray(self.sigmas, dtype=float))
        if not (w.shape == mu.shape == sd.shape) or w.ndim != 1 or len(w) == 0:
            raise MarketStatesError("weights, mus and sigmas must be 1-D of equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise MarketStatesError("weights must be non-negative and sum to 1")
        if np.any(sd < 0) or not np.all(np.isfinite(mu)) or not np.all(np.isfinite(sd)):
            raise MarketStatesError("sigmas must be finite and non-negative")
        if not (np.any(sd > 0) or len(np.unique(mu)) > 1):
            raise MarketStatesError("degenerate mixture: zero variance")
        for name, arr in (("weights", w), ("mus", mu), ("sigmas", sd)):
            object.__setattr__(self, name, arr)

    @property
    def k(self) -> int:
        return len(self.weights)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "mus": self.mus.tolist(), "sigmas": self.sigmas.tolist()}


def sample_with_components(spec: MixtureSpec, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` returns and the component index behind each draw."""
    if n < 1:
        raise MarketStatesError("n must be positive")
    rng = np.random.default_rng(seed)
    comps = rng.choice(spec.k, size=n, p=spec.weights)
    z = rng.standard_normal(n)
    return spec.mus[comps] + spec.sigmas[comps] * z, comps


def sample(spec: MixtureSpec, n: int, seed: int) -> np.ndarray:
    return sample_with_components(spec, n, seed)[0]


def gaussian_central_moment(delta, sigma, p: int):
    """E[(X - c)^p] for X ~ N(c + delta, sigma^2)."""
    var = sigma * sigma
    total = 0.0
    double_fact = 1.0
    for j in range(0, p + 1, 2):
        if j > 0:
            double_fact *= j - 1
        total = total + comb(p, j) * delta ** (p - j) * var ** (j // 2) * double_fact
    return total


def central_moments(spec: MixtureSpec, orders=(2, 3, 4)) -> dict[int, float]:
    mean = float(np.dot(spec.weights, spec.mus))
    delta = spec.mus - mean
    return {p: float(np.dot(spec.weights, gaussian_central_moment(delta, spec.sigmas, p))) for p in orders}


def analytic_moments(spec: MixtureSpec) -> tuple[float, float, float, float]:
    """(mean, std, skewness, excess kurtosis) of the mixture in closed form."""
    mean = float(np.dot(spec.weights, spec.mus))
    m = central_moments(spec)
    var = m[2]
    if not var > 0:
        raise MarketStatesError("zero variance")
    std = float(np.sqrt(var))
    # subtract before dividing so a single Gaussian gives exactly 0
    return mean, std, m[3] / std**3, (m[4] - 3.0 * var**2) / var**2


def fit_normal(returns) -> MixtureSpec:
    """Single Gaussian with the sample mean and population std."""
    r = returns.returns if isinstance(returns, ReturnSeries) else np.asarray(returns, dtype=float)
    if len(r) < 2:
        raise MarketStatesError("need at least 2 returns")
    if np.ptp(r) == 0:
        raise MarketStatesError("constant return series")
    mu = r.mean()
    sigma = np.sqrt(np.mean((r - mu) ** 2))
    return MixtureSpec(np.array([1.0]), np.array([mu]), np.array([sigma]))


def from_state_machine(sm: StateMachine) -> MixtureSpec:
    return MixtureSpec(sm.freq, sm.state_mu, sm.state_sigma)
