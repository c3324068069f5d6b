import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgeplan.topology import Neighborhood, build_neighborhoods, grid_zones, kmeans_clusters

coords = st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=2, max_size=15)


def omega_lists(nbh):
    return [o.tolist() for o in nbh.omega]


def test_collinear_radius_example():
    xy = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    assert omega_lists(build_neighborhoods(xy, radius=1.0)) == [[0, 1], [0, 1, 2], [1, 2]]


def test_tiny_radius_isolates_and_full_knn():
    xy = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 5.0]])
    assert build_neighborhoods(xy, radius=0.5) == Neighborhood.isolated(3)
    assert build_neighborhoods(xy, k_nearest=3) == Neighborhood.full(3)


def test_knn_ties_go_to_lower_index():
    xy = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]])
    assert omega_lists(build_neighborhoods(xy, k_nearest=2))[0] == [0, 1]


def test_rule_errors():
    xy = np.zeros((3, 2))
    with pytest.raises(ValueError):
        build_neighborhoods(xy, k_nearest=4)
    with pytest.raises(ValueError):
        build_neighborhoods(xy)
    with pytest.raises(ValueError):
        build_neighborhoods(xy, radius=-1.0)
    with pytest.raises(ValueError, match="itself"):
        Neighborhood([[1], [1]])


def test_json_roundtrip():
    nbh = build_neighborhoods(np.random.default_rng(0).uniform(size=(8, 2)), radius=0.4)
    back = Neighborhood.from_json(nbh.to_json())
    assert back == nbh and back.rule == nbh.rule


@given(coords, st.floats(0.1, 40), st.floats(0.0, 40))
def test_radius_symmetric_and_monotone(pts, r, extra):
    xy = np.array(pts)
    small = build_neighborhoods(xy, radius=r)
    big = build_neighborhoods(xy, radius=r + extra)
    for m, o in enumerate(small.omega):
        assert m in o
        for n in o:
            assert m in small.omega[n]
        assert set(o.tolist()) <= set(big.omega[m].tolist())


def test_pool_sums_servers_in_reach():
    nbh = Neighborhood([[0, 1], [1], [1, 2]])
    np.testing.assert_allclose(nbh.pool([1, 2, 3]), [3, 2, 5])


def test_kmeans_k1_and_kM():
    xy = np.random.default_rng(2).uniform(size=(7, 2))
    one = kmeans_clusters(xy, 1)
    np.testing.assert_allclose(one.centroids[0], xy.mean(axis=0))
    assert (one.assignment == 0).all()
    all_ = kmeans_clusters(xy, 7, seed=5)
    assert sorted(all_.assignment.tolist()) == list(range(7))
    with pytest.raises(ValueError):
        kmeans_clusters(xy, 8)


def _best_two_clustering(xy):
    best = None
    for labels in itertools.product([0, 1], repeat=len(xy)):
        labels = np.array(labels)
        if labels.min() == labels.max():
            continue
        cost = sum(((xy[labels == c] - xy[labels == c].mean(axis=0)) ** 2).sum() for c in (0, 1))
        if best is None or cost < best[0] - 1e-12:
            best = (cost, labels)
    return best


def test_kmeans_separated_pairs_match_brute_force():
    xy = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    cl = kmeans_clusters(xy, 2, seed=0)
    cost, labels = _best_two_clustering(xy)
    same = [cl.assignment[i] == cl.assignment[j] for i, j in itertools.combinations(range(4), 2)]
    expected = [labels[i] == labels[j] for i, j in itertools.combinations(range(4), 2)]
    assert same == expected


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_kmeans_invariants(seed, k):
    xy = np.random.default_rng(seed).uniform(0, 10, size=(20, 2))
    cl = kmeans_clusters(xy, k, seed=seed)
    assert cl.assignment.shape == (20,)
    assert set(cl.assignment.tolist()) <= set(range(k))
    for c in range(k):
        assert cl.assignment[cl.centroid_station[c]] == c
    hist = np.array(cl.inertia_history)
    assert (np.diff(hist) <= 1e-9 * max(1.0, hist[0])).all()
    again = kmeans_clusters(xy, k, seed=seed)
    np.testing.assert_array_equal(again.assignment, cl.assignment)


def test_grid_zones_groups_by_cell():
    xy = np.array([[0.1, 0.1], [0.9, 0.2], [1.5, 0.1], [0.2, 1.7]])
    z = grid_zones(xy, 1.0)
    assert z.k == 3
    assert z.assignment[0] == z.assignment[1] != z.assignment[2]
    for c in range(z.k):
        assert z.assignment[z.centroid_station[c]] == c
    with pytest.raises(ValueError):
        grid_zones(xy, 0.0)
