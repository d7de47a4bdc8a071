import numpy as np
import pytest
from sklearn.cluster import KMeans

from sparx_illc.cluster import LayerClustering, canonical_labels, cluster_layer, kmeans, n_clusters
from sparx_illc.errors import ClusteringError, ConfigError


def build_blobs(seed: int = 0, per_blob: int = 50) -> np.ndarray:
    """よく分離した 2 次元ガウス 3 塊"""
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    return np.vstack([c + rng.normal(scale=0.5, size=(per_blob, 2)) for c in centers])


@pytest.mark.parametrize(
    "gamma, width, expected",
    [(0.2, 100, 20), (0.5, 5, 3), (0.01, 10, 1), (1.0, 7, 7), (1 - 0.8, 100, 20)],
    ids=["table-rate", "half-up", "floor-to-one", "identity", "from-rate"],
)
def test_n_clusters(gamma, width, expected):
    assert n_clusters(gamma, width) == expected


@pytest.mark.parametrize("gamma", [0.0, 1.5, -0.2])
def test_n_clusters_rejects_gamma(gamma):
    with pytest.raises(ConfigError, match="gamma"):
        n_clusters(gamma, 10)


def test_kmeans_matches_restart_oracle():
    points = build_blobs()
    result = kmeans(points, 3, seed=0)
    oracle = KMeans(n_clusters=3, n_init=50, random_state=0).fit(points)
    assert result.inertia <= oracle.inertia_ * 1.01
    assert np.bincount(result.labels).tolist() == [50, 50, 50]


def test_kmeans_is_deterministic():
    points = build_blobs(seed=3)
    a = kmeans(points, 4, seed=11)
    b = kmeans(points, 4, seed=11)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.centroids, b.centroids)


def test_kmeans_inertia_is_non_increasing():
    result = kmeans(build_blobs(seed=1), 5, seed=2)
    history = np.array(result.inertia_history)
    assert np.all(np.diff(history) <= 1e-9)


def test_kmeans_k_equals_points_gives_zero_inertia():
    points = np.random.default_rng(0).normal(size=(6, 3))
    result = kmeans(points, 6, seed=0)
    assert sorted(result.labels.tolist()) == list(range(6))
    assert result.inertia == pytest.approx(0.0)


def test_kmeans_repairs_empty_clusters_on_identical_points():
    points = np.zeros((5, 2))
    result = kmeans(points, 3, seed=0)
    assert set(result.labels.tolist()) == {0, 1, 2}


@pytest.mark.parametrize("k", [0, 7])
def test_kmeans_rejects_k(k):
    with pytest.raises(ClusteringError, match="k="):
        kmeans(np.zeros((6, 2)), k, seed=0)


def test_kmeans_rejects_nan():
    points = np.ones((4, 2))
    points[1, 0] = np.nan
    with pytest.raises(ClusteringError, match="NaN"):
        kmeans(points, 2, seed=0)


def test_canonical_labels_first_occurrence():
    assert canonical_labels(np.array([2, 2, 0, 1, 0])).tolist() == [0, 0, 1, 2, 1]


def test_cluster_layer_identity_at_gamma_one():
    acts = np.random.default_rng(0).normal(size=(10, 8))
    lc = cluster_layer(acts, 1.0, seed=5, layer_index=2)
    assert lc.k == 8
    assert lc.labels.tolist() == list(range(8))
    assert lc.layer_index == 2


def test_cluster_layer_groups_duplicated_neurons():
    rng = np.random.default_rng(0)
    base = rng.normal(size=(20, 3))
    acts = np.column_stack([base[:, 0], base[:, 1], base[:, 0], base[:, 2], base[:, 1], base[:, 2]])
    lc = cluster_layer(acts, 0.5, seed=0)
    assert lc.k == 3
    assert lc.labels.tolist() == [0, 1, 0, 2, 1, 2]


def test_cluster_layer_all_dead_layer_still_valid():
    lc = cluster_layer(np.zeros((4, 6)), 0.5, seed=0)
    assert lc.k == 3
    assert np.all(lc.sizes() >= 1)


def test_layer_clustering_validation_and_round_trip():
    with pytest.raises(ClusteringError, match="0..2"):
        LayerClustering(layer_index=1, labels=np.array([0, 0, 2, 2]), k=3)
    lc = LayerClustering(layer_index=1, labels=np.array([0, 1, 0, 2]), k=3)
    assert LayerClustering.from_dict(lc.to_dict()).labels.tolist() == [0, 1, 0, 2]
    assert lc.members(0).tolist() == [0, 2]
