"""Seeded K-Means (k-means++ initialization, Lloyd iterations, best of several restarts)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from marketstates.config import KMeansSettings
from marketstates.errors import ClusteringError
from marketstates.features import FeatureMatrix, StandardizationParams

_DEFAULTS = KMeansSettings()


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """K centroids in standardized feature space.

    ``history`` holds the inertia after every assignment step of the winning
    restart; it is non-increasing by construction and kept so callers can
    verify that.
    """

    centroids: np.ndarray
    inertia: float
    seed: int
    n_iterations: int
    history: tuple[float, ...] = field(default=())

    def __post_init__(self):
        centroids = np.asarray(self.centroids, dtype=float)
        if centroids.ndim != 2 or centroids.shape[0] < 1:
            raise ClusteringError("centroids must be a (k, d) array")
        object.__setattr__(self, "centroids", centroids)
        object.__setattr__(self, "history", tuple(float(x) for x in self.history))

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": int(self.seed),
            "centroids": self.centroids.tolist(),
            "inertia": float(self.inertia),
            "n_iterations": int(self.n_iterations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        return cls(np.array(d["centroids"], dtype=float), d["inertia"], d["seed"], d["n_iterations"])


def _rows(rows) -> np.ndarray:
    x = rows.values if isinstance(rows, FeatureMatrix) else np.asarray(rows, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[rng.integers(n)]]
    closest = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers.append(x[idx])
        closest = np.minimum(closest, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def _repair_empty(x, labels, d2, k):
    """Move the point farthest from its centroid into each empty cluster."""
    counts = np.bincount(labels, minlength=k)
    own = d2[np.arange(len(x)), labels].copy()
    for j in np.flatnonzero(counts == 0):
        donors = counts[labels] > 1
        far = int(np.argmax(np.where(donors, own, -1.0)))
        counts[labels[far]] -= 1
        labels[far] = j
        counts[j] = 1
        own[far] = 0.0
    return labels


def _lloyd(x, k, rng, max_iter, tol):
    centroids = _plusplus(x, k, rng)
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = _sq_dists(x, centroids)
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(x)), labels].sum()))
        labels = _repair_empty(x, labels, d2, k)
        new = np.array([x[labels == j].mean(axis=0) for j in range(k)])
        shift = np.sqrt(np.max(np.sum((new - centroids) ** 2, axis=1)))
        centroids = new
        if shift < tol:
            break
    d2 = _sq_dists(x, centroids)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(len(x)), labels].sum())
    history.append(inertia)
    return centroids, inertia, n_iter, history


def fit(
    rows,
    k: int,
    seed: int = 0,
    restarts: int = _DEFAULTS.restarts,
    max_iter: int = _DEFAULTS.max_iter,
    tol: float = _DEFAULTS.tol,
) -> ClusterModel:
    """Best-of-``restarts`` K-Means by final inertia.

    Restart ``i`` draws from ``default_rng(seed + i)``, so restarts are
    independent and the result does not depend on evaluation order.

    Raises:
        ClusteringError: ``k < 2``, ``k`` larger than the number of rows, or
            fewer than ``k`` distinct rows ("degenerate data").
    """
    x = _rows(rows)
    n = len(x)
    if k < 2:
        raise ClusteringError("k must be at least 2")
    if k > n:
        raise ClusteringError(f"k={k} exceeds the number of rows ({n})")
    if restarts < 1 or max_iter < 1 or not tol > 0:
        raise ClusteringError("restarts and max_iter must be positive, tol > 0")
    if len(np.unique(x, axis=0)) < k:
        raise ClusteringError("degenerate data: fewer distinct rows than clusters")

    best = None
    for i in range(restarts):
        rng = np.random.default_rng(int(seed) + i)
        result = _lloyd(x, k, rng, max_iter, tol)
        if best is None or result[1] < best[1]:
            best = result
    centroids, inertia, n_iter, history = best
    return ClusterModel(centroids, inertia, int(seed), n_iter, tuple(history))


def _vector(model: ClusterModel, row) -> np.ndarray:
    v = np.asarray(row, dtype=float).ravel()
    if v.shape[0] != model.dim:
        raise ClusteringError(f"dimension mismatch: row has {v.shape[0]} values, model expects {model.dim}")
    return v


def distances(model: ClusterModel, row) -> np.ndarray:
    """Euclidean distance from ``row`` to each centroid, in centroid order."""
    v = _vector(model, row)
    return np.sqrt(np.sum((model.centroids - v) ** 2, axis=1))


def assign(model: ClusterModel, row) -> int:
    """Nearest centroid; ties go to the lowest index."""
    return int(np.argmin(distances(model, row)))


def distance_matrix(model: ClusterModel, rows) -> np.ndarray:
    x = _rows(rows)
    if x.shape[1] != model.dim:
        raise ClusteringError(f"dimension mismatch: rows have {x.shape[1]} columns, model expects {model.dim}")
    return np.sqrt(_sq_dists(x, model.centroids))


def assign_all(model: ClusterModel, rows) -> np.ndarray:
    return np.argmin(distance_matrix(model, rows), axis=1)


def destandardize_centroids(model: ClusterModel, params: StandardizationParams) -> np.ndarray:
    if len(params.means) != model.dim:
        raise ClusteringError("dimension mismatch between centroids and standardization params")
    return model.centroids * params.stds + params.means
