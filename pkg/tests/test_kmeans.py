import numpy as np
import pytest

from marketstates import kmeans
from marketstates.errors import ClusteringError
from marketstates.features import StandardizationParams

from oracles import exhaustive_kmeans_optimum


def test_separable_pairs():
    m = kmeans.fit(np.array([0.0, 0.1, 10.0, 10.1]), 2, seed=3)
    np.testing.assert_allclose(sorted(m.centroids.ravel()), [0.05, 10.05], atol=1e-12)
    assert m.inertia == pytest.approx(0.01, rel=1e-9)
    assert m.k == 2 and m.dim == 1


def test_identical_rows_are_degenerate():
    with pytest.raises(ClusteringError, match="degenerate data"):
        kmeans.fit(np.ones((10, 3)), 2)


@pytest.mark.parametrize("k, n", [(1, 5), (6, 5)])
def test_invalid_k(k, n):
    with pytest.raises(ClusteringError):
        kmeans.fit(np.random.default_rng(0).normal(size=(n, 2)), k)


@pytest.mark.parametrize("seed", range(5))
def test_matches_exhaustive_optimum_on_eight_points(seed):
    x = np.random.default_rng(seed).normal(size=(8, 2))
    m = kmeans.fit(x, 2, seed=seed, restarts=20)
    assert m.inertia == pytest.approx(exhaustive_kmeans_optimum(x, 2), rel=1e-9)


def test_exhaustive_oracle_on_hand_case():
    # {0,1} | {10} is optimal: SSE 0.5
    assert exhaustive_kmeans_optimum(np.array([0.0, 1.0, 10.0]), 2) == pytest.approx(0.5)


def test_inertia_consistent_and_nearest(rng):
    x = np.vstack([rng.normal(c, 0.5, (60, 3)) for c in (-3, 0, 3)])
    m = kmeans.fit(x, 3, seed=1)
    labels = kmeans.assign_all(m, x)
    sse = sum(np.sum((x[labels == j] - m.centroids[j]) ** 2) for j in range(3))
    assert m.inertia == pytest.approx(sse, rel=1e-8)
    for row, lab in zip(x, labels):
        d = np.sqrt(((m.centroids - row) ** 2).sum(axis=1))
        assert lab == int(np.argmin(d))
    # centroids are pairwise distinct
    diffs = np.abs(m.centroids[:, None, :] - m.centroids[None, :, :]).max(axis=2)
    assert np.all(diffs[~np.eye(3, dtype=bool)] > 1e-12)


def test_deterministic(rng):
    x = rng.normal(size=(200, 4))
    a = kmeans.fit(x, 4, seed=9, restarts=5)
    b = kmeans.fit(x, 4, seed=9, restarts=5)
    assert a.centroids.tobytes() == b.centroids.tobytes()
    assert a.inertia == b.inertia


def test_restart_order_independent(rng):
    # best-of-restarts equals the best single-restart fit with seeds seed..seed+R-1
    x = rng.normal(size=(120, 2))
    best = kmeans.fit(x, 5, seed=40, restarts=6)
    singles = [kmeans.fit(x, 5, seed=40 + i, restarts=1) for i in range(6)]
    assert best.inertia == min(s.inertia for s in singles)


def test_empty_cluster_repair_keeps_k():
    # many duplicates and a few outliers push k-means toward empty clusters
    x = np.vstack([np.zeros((50, 2)), np.ones((50, 2)), [[5.0, 5.0], [6.0, 6.0], [7.0, 7.0]]])
    m = kmeans.fit(x, 5, seed=0, restarts=3)
    labels = kmeans.assign_all(m, x)
    assert len(np.unique(labels)) == 5


def test_assign_exact_hit_and_tie():
    m = kmeans.ClusterModel(np.array([[0.0, 0.0], [2.0, 0.0], [5.0, 5.0], [9.0, 1.0]]), 0.0, 0, 1)
    assert kmeans.assign(m, [9.0, 1.0]) == 3
    assert kmeans.assign(m, [1.0, 0.0]) == 0


def test_assign_linear_scan(rng):
    m = kmeans.ClusterModel(rng.normal(size=(6, 3)), 0.0, 0, 1)
    for row in rng.normal(size=(100, 3)):
        d = [np.sqrt(sum((row[c] - m.centroids[j][c]) ** 2 for c in range(3))) for j in range(6)]
        assert kmeans.assign(m, row) == min(range(6), key=lambda j: (d[j], j))


def test_distances(rng):
    m = kmeans.ClusterModel(np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]), 0.0, 0, 1)
    assert kmeans.distances(m, [1.0, 2.0, 3.0])[1] == 0.0
    assert kmeans.distances(m, [0.0, 1.0, 0.0])[0] == 1.0
    row = rng.normal(size=3)
    for j in range(2):
        direct = np.sqrt(sum((row[c] - m.centroids[j, c]) ** 2 for c in range(3)))
        assert abs(kmeans.distances(m, row)[j] - direct) < 1e-12
    with pytest.raises(ClusteringError, match="dimension mismatch"):
        kmeans.distances(m, [1.0, 2.0])
    with pytest.raises(ClusteringError):
        kmeans.assign(m, [1.0])


def test_destandardize_centroids(rng):
    c = rng.normal(size=(3, 4))
    m = kmeans.ClusterModel(c, 0.0, 0, 1)
    ident = StandardizationParams(np.zeros(4), np.ones(4))
    np.testing.assert_array_equal(kmeans.destandardize_centroids(m, ident), c)
    zero = kmeans.ClusterModel(np.zeros((2, 4)), 0.0, 0, 1)
    p = StandardizationParams(np.ones(4), 2 * np.ones(4))
    np.testing.assert_array_equal(kmeans.destandardize_centroids(zero, p), np.ones((2, 4)))
    p = StandardizationParams(rng.normal(size=4), rng.uniform(0.5, 2, 4))
    back = (kmeans.destandardize_centroids(m, p) - p.means) / p.stds
    np.testing.assert_allclose(back, c, atol=1e-12)
    with pytest.raises(ClusteringError):
        kmeans.destandardize_centroids(m, StandardizationParams(np.zeros(2), np.ones(2)))


def test_json_round_trip(rng):
    m = kmeans.fit(rng.normal(size=(40, 2)), 3, seed=2)
    back = kmeans.ClusterModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(back.centroids, m.centroids)
    assert list(m.to_dict()) == ["k", "seed", "centroids", "inertia", "n_iterations"]
