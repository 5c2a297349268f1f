"""Regime state machine built from a cluster label sequence."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from datetime import date
from typing import Optional, Sequence

import numpy as np

from marketstates import kmeans
from marketstates.config import TagThresholds
from marketstates.errors import StateMachineError
from marketstates.features import FeatureMatrix, column_names
from marketstates.marketdata import ReturnSeries


def _labels(label_seq, k: int, min_len: int) -> np.ndarray:
    labels = np.asarray(label_seq)
    if labels.ndim != 1 or len(labels) < min_len:
        raise StateMachineError(f"label sequence must hold at least {min_len} labels")
    if labels.size and (labels.dtype.kind not in "iu" or labels.min() < 0 or labels.max() >= k):
        raise StateMachineError(f"label out of range [0, {k})")
    return labels.astype(np.int64)


def transition_counts(label_seq, k: int) -> np.ndarray:
    """``counts[i, j]`` = number of days labeled ``i`` immediately followed by ``j``."""
    labels = _labels(label_seq, k, 2)
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (labels[:-1], labels[1:]), 1)
    return counts


def transition_probs(counts) -> np.ndarray:
    """Row-normalize counts; a row with no observed successor becomes a self-loop."""
    counts = np.asarray(counts)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise StateMachineError("counts must be a square matrix")
    if np.any(counts < 0):
        raise StateMachineError("negative count")
    counts = counts.astype(float)
    totals = counts.sum(axis=1)
    probs = np.eye(len(counts))
    nz = totals > 0
    probs[nz] = counts[nz] / totals[nz, None]
    return probs


def state_frequencies(label_seq, k: int) -> np.ndarray:
    labels = _labels(label_seq, k, 1)
    return np.bincount(labels, minlength=k) / len(labels)


def state_gaussians(label_seq, returns, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-state mean and population std of the returns on that state's days.

    Raises:
        StateMachineError: a state has fewer than two member days.
    """
    labels = _labels(label_seq, k, 1)
    r = returns.returns if isinstance(returns, ReturnSeries) else np.asarray(returns, dtype=float)
    if len(r) != len(labels):
        raise StateMachineError("labels and returns are not aligned")
    mus, sigmas = np.empty(k), np.empty(k)
    for i in range(k):
        members = r[labels == i]
        if len(members) < 2:
            raise StateMachineError(f"state {i} has {len(members)} member days; need at least 2")
        mus[i] = members.mean()
        sigmas[i] = np.sqrt(np.mean((members - mus[i]) ** 2))
    return mus, sigmas


def day_probabilities(dists) -> np.ndarray:
    """Normalized inverse-distance membership probabilities.

    A zero distance takes all the mass; several zeros share it equally.
    """
    d = np.asarray(dists, dtype=float)
    zero = d == 0
    if zero.any():
        return zero / zero.sum()
    w = 1.0 / d
    return w / w.sum()


@dataclass(frozen=True, eq=False)
class StateMachine:
    counts: np.ndarray
    probs: np.ndarray
    freq: np.ndarray
    state_mu: np.ndarray
    state_sigma: np.ndarray
    member_counts: np.ndarray
    labels: tuple[Optional[str], ...] = field(default=())

    def __post_init__(self):
        k = len(self.freq)
        if not self.labels:
            object.__setattr__(self, "labels", (None,) * k)
        if len(self.labels) != k:
            raise StateMachineError("one label per state required")

    @property
    def k(self) -> int:
        return len(self.freq)

    def with_labels(self, labels: Sequence[Optional[str]]) -> "StateMachine":
        return StateMachine(
            self.counts, self.probs, self.freq, self.state_mu, self.state_sigma,
            self.member_counts, tuple(labels),
        )

    def pooled_mean(self) -> float:
        return float(np.dot(self.freq, self.state_mu))

    def pooled_std(self) -> float:
        """Std of the member returns pooled over all states (law of total variance)."""
        m = self.pooled_mean()
        return float(np.sqrt(max(np.dot(self.freq, self.state_sigma**2 + (self.state_mu - m) ** 2), 0.0)))

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "counts": self.counts.tolist(),
            "probs": self.probs.tolist(),
            "freq": self.freq.tolist(),
            "state_mu": self.state_mu.tolist(),
            "state_sigma": self.state_sigma.tolist(),
            "member_counts": self.member_counts.tolist(),
            "labels": list(self.labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StateMachine":
        return cls(
            np.array(d["counts"], dtype=np.int64),
            np.array(d["probs"], dtype=float),
            np.array(d["freq"], dtype=float),
            np.array(d["state_mu"], dtype=float),
            np.array(d["state_sigma"], dtype=float),
            np.array(d["member_counts"], dtype=np.int64),
            tuple(d.get("labels") or ()),
        )


def machine_from_labels(label_seq, returns, k: int) -> StateMachine:
    labels = _labels(label_seq, k, 2)
    counts = transition_counts(labels, k)
    mus, sigmas = state_gaussians(labels, returns, k)
    return StateMachine(
        counts=counts,
        probs=transition_probs(counts),
        freq=state_frequencies(labels, k),
        state_mu=mus,
        state_sigma=sigmas,
        member_counts=np.bincount(labels, minlength=k),
    )


def build_state_machine(model: kmeans.ClusterModel, features: FeatureMatrix, returns: ReturnSeries) -> StateMachine:
    """Label every standardized feature row and summarize the sequence.

    ``returns`` must be the returns on the feature dates (after warm-up).
    """
    if len(features) != len(returns) or features.dates != returns.dates:
        raise StateMachineError("feature rows and returns must share the same dates")
    labels = kmeans.assign_all(model, features)
    return machine_from_labels(labels, returns, model.k)


@dataclass(frozen=True, eq=False)
class StateTrace:
    dates: tuple[date, ...]
    prob_rows: np.ndarray

    def argmax(self) -> np.ndarray:
        return np.argmax(self.prob_rows, axis=1)

    def to_csv(self, path: str | os.PathLike, tags: Optional[Sequence[Optional[str]]] = None) -> None:
        k = self.prob_rows.shape[1]
        header = ["date"] + [f"p_{i}" for i in range(k)] + ["state"]
        if tags is not None:
            header.append("label")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for d, row, s in zip(self.dates, self.prob_rows, self.argmax()):
                cells = [d.isoformat()] + [repr(float(p)) for p in row] + [str(int(s))]
                if tags is not None:
                    cells.append(tags[s] or f"state-{s}")
                fh.write(",".join(cells) + "\n")


def state_trace(model: kmeans.ClusterModel, features: FeatureMatrix) -> StateTrace:
    dmat = kmeans.distance_matrix(model, features)
    rows = np.array([day_probabilities(d) for d in dmat]).reshape(len(dmat), model.k)
    return StateTrace(features.dates, rows)


def _tag(centroid: np.ndarray, horizons: Sequence[int], ref_sigma: float, th: TagThresholds) -> Optional[str]:
    h = np.asarray(horizons, dtype=float)
    mom = centroid[0::2] / (ref_sigma * np.sqrt(h))
    risk = centroid[1::2]
    level = float(np.mean(risk)) / ref_sigma
    short, long_ = mom[0], mom[-1]

    if long_ <= th.crisis_momentum and level >= th.crisis_risk:
        return "crisis"
    if short > 0 and long_ < 0 and level >= th.recovery_risk:
        return "recovery"
    if abs(short) <= th.flat_momentum and level <= th.low_risk:
        return "flattening"
    if long_ >= th.trend_momentum and level <= th.expansion_risk:
        return "expansion"
    if long_ <= -th.trend_momentum and (risk[0] >= risk[-1] or level >= 1.0):
        return "contraction"
    return None


@dataclass(frozen=True)
class RegimeRow:
    state: int
    tag: str
    centroid: tuple[float, ...]
    freq: float
    mu: float
    sigma: float


def interpret_states(
    sm: StateMachine,
    centroids_original_units,
    horizons: Sequence[int],
    thresholds: TagThresholds = TagThresholds(),
    ref_sigma: Optional[float] = None,
) -> list[RegimeRow]:
    """Tag each state from its de-standardized centroid.

    Momenta are scaled to z-scores with ``ref_sigma`` (default: the pooled
    training volatility of the machine). States matching no rule are called
    ``state-<i>``.
    """
    centroids = np.asarray(centroids_original_units, dtype=float)
    if centroids.shape != (sm.k, 2 * len(horizons)):
        raise StateMachineError("centroid table does not match the machine and horizons")
    if ref_sigma is None:
        ref_sigma = sm.pooled_std()
    if not ref_sigma > 0:
        ref_sigma = float(np.max(centroids[:, 1::2])) or 1.0
    rows = []
    for i, c in enumerate(centroids):
        tag = _tag(c, horizons, ref_sigma, thresholds) or f"state-{i}"
        rows.append(RegimeRow(i, tag, tuple(float(v) for v in c), float(sm.freq[i]),
                              float(sm.state_mu[i]), float(sm.state_sigma[i])))
    return rows


def report_csv(rows: Sequence[RegimeRow], horizons: Sequence[int]) -> str:
    """Centroid table in ``Mom_* ... Risk_*`` order followed by freq/mu/sigma."""
    names = column_names(horizons)
    order = [i for i, n in enumerate(names) if n.startswith("Mom")] + [
        i for i, n in enumerate(names) if n.startswith("Risk")
    ]
    lines = [",".join(["cluster", "label"] + [names[i] for i in order] + ["freq", "mu", "sigma"])]
    for r in rows:
        cells = [str(r.state), r.tag] + [repr(r.centroid[i]) for i in order]
        cells += [repr(r.freq), repr(r.mu), repr(r.sigma)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
