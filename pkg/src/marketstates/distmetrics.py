"""Two-sample distances (KS, histogram KL, Wasserstein-1) and four-moment summaries."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from marketstates.config import MetricSettings
from marketstates.errors import MarketStatesError

_DEFAULTS = MetricSettings()


def _sample(a) -> np.ndarray:
    x = np.asarray(a, dtype=float).ravel()
    if x.size == 0:
        raise MarketStatesError("empty sample")
    return x


def _ecdfs(a: np.ndarray, b: np.ndarray):
    """Both empirical CDFs evaluated at every pooled point, plus the sorted support."""
    a, b = np.sort(a), np.sort(b)
    support = np.unique(np.concatenate([a, b]))
    fa = np.searchsorted(a, support, side="right") / a.size
    fb = np.searchsorted(b, support, side="right") / b.size
    return support, fa, fb


def ks_statistic(a, b) -> float:
    """sup_x |F_a(x) - F_b(x)|; the sup is attained at a pooled sample point."""
    _, fa, fb = _ecdfs(_sample(a), _sample(b))
    return float(np.max(np.abs(fa - fb)))


def wasserstein1(a, b) -> float:
    """Integral of |F_a - F_b| over the real line (piecewise constant between pooled points)."""
    support, fa, fb = _ecdfs(_sample(a), _sample(b))
    return float(np.sum(np.abs(fa - fb)[:-1] * np.diff(support)))


def histogram(x: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    """Equal-width counts on [lo, hi]; the top edge belongs to the last bin."""
    idx = np.floor((x - lo) * bins / (hi - lo)).astype(np.int64)
    return np.bincount(np.clip(idx, 0, bins - 1), minlength=bins)


def kl_divergence(a, b, bins: int = _DEFAULTS.bins, epsilon: float = _DEFAULTS.epsilon) -> float:
    """Histogram estimate of D(a || b) in nats.

    Both samples share ``bins`` equal-width bins over the pooled range. Each
    histogram is normalized to probabilities, ``epsilon`` is added to every
    bin, and the result is renormalized, so the smoothing does not depend on
    sample size.
    """
    a, b = _sample(a), _sample(b)
    if bins < 2:
        raise MarketStatesError("bins must be at least 2")
    if not epsilon > 0:
        raise MarketStatesError("epsilon must be positive")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if not hi > lo:
        raise MarketStatesError("degenerate pooled range: all values identical")
    p = histogram(a, lo, hi, bins) / a.size + epsilon
    q = histogram(b, lo, hi, bins) / b.size + epsilon
    p /= p.sum()
    q /= q.sum()
    return float(max(np.sum(p * np.log(p / q)), 0.0))


def moments(a) -> tuple[float, float, float, float]:
    """(mean, population std, skewness, excess kurtosis)."""
    x = _sample(a)
    if x.size < 2:
        raise MarketStatesError("need at least 2 values")
    if np.ptp(x) == 0:
        raise MarketStatesError("constant sample: skewness and kurtosis undefined")
    mean = x.mean()
    dev = x - mean
    m2 = np.mean(dev**2)
    m3 = np.mean(dev**3)
    m4 = np.mean(dev**4)
    return float(mean), float(np.sqrt(m2)), float(m3 / m2**1.5), float(m4 / m2**2 - 3.0)


@dataclass(frozen=True)
class DistanceReport:
    ks: float
    kl: float
    wasserstein: float
    n_a: int
    n_b: int
    bins: int
    epsilon: float

    CSV_HEADER = "ks,kl,wasserstein,n_a,n_b,bins,epsilon"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        row = [repr(self.ks), repr(self.kl), repr(self.wasserstein), str(self.n_a),
               str(self.n_b), str(self.bins), repr(self.epsilon)]
        return self.CSV_HEADER + "\n" + ",".join(row) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "DistanceReport":
        return cls(**{k: d[k] for k in ("ks", "kl", "wasserstein", "n_a", "n_b", "bins", "epsilon")})


def compare(real, model, bins: int = _DEFAULTS.bins, epsilon: float = _DEFAULTS.epsilon) -> DistanceReport:
    """All three distances with ``real`` as the reference sample ``a``."""
    a, b = _sample(real), _sample(model)
    return DistanceReport(
        ks=ks_statistic(a, b),
        kl=kl_divergence(a, b, bins, epsilon),
        wasserstein=wasserstein1(a, b),
        n_a=int(a.size),
        n_b=int(b.size),
        bins=int(bins),
        epsilon=float(epsilon),
    )
