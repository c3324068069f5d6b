import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgeplan.evaluation import (
    PolicySpec, RejectionModel, apportion, baseline_place, evaluate_frames, evaluate_placement,
    evaluate_schedule, min_rejection, required_servers,
)
from edgeplan.placement import PlacementParams
from edgeplan.scheduling import SchedulePlan, SlotPlan, always_on_plan
from edgeplan.topology import Neighborhood

from oracles import maxflow_rejection, random_omega


def test_min_rejection_examples():
    w = [8.0, 12.0]
    r, _ = min_rejection(w, [10, 10], 1.0, Neighborhood.isolated(2))
    assert r == pytest.approx(2.0)
    r, routing = min_rejection(w, [10, 10], 1.0, Neighborhood.full(2))
    assert r == pytest.approx(0.0)
    src, _ = routing.nbh.pairs
    np.testing.assert_allclose(np.bincount(src, weights=routing.values), [1.0, 1.0])


def test_zero_workload_and_zero_servers():
    nbh = Neighborhood.full(3)
    assert min_rejection(np.zeros(3), [1, 1, 1], 1.0, nbh)[0] == 0.0
    assert min_rejection([1.0, 2.0, 0.0], np.zeros(3), 1.0, nbh)[0] == pytest.approx(3.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_rejection_matches_max_flow(seed):
    rng = np.random.default_rng(seed)
    M = int(rng.integers(1, 8))
    omega = random_omega(rng, M, p=0.4)
    w = rng.uniform(0, 10, size=M) * (rng.random(M) < 0.8)
    s = rng.integers(0, 4, size=M)
    C = float(rng.uniform(0.5, 3))
    r, _ = min_rejection(w, s, C, Neighborhood(omega))
    assert r == pytest.approx(maxflow_rejection(w, s, C, omega), abs=1e-7)


def test_model_reuse_across_frames():
    nbh = Neighborhood([[0, 1], [1]])
    model = RejectionModel([1, 1], 1.0, nbh)
    assert model.rejected([3.0, 0.0]) == pytest.approx(1.0)
    assert model.rejected([0.0, 3.0]) == pytest.approx(2.0)
    assert model.rejected([3.0, 0.0]) == pytest.approx(1.0)


def test_apportion_examples():
    np.testing.assert_array_equal(apportion(4, [30, 10]), [3, 1])
    np.testing.assert_array_equal(apportion(3, [1, 1, 1, 1]), [1, 1, 1, 0])
    assert apportion(7, [0.2, 0.5, 0.3]).sum() == 7
    with pytest.raises(ValueError):
        apportion(3, [0, 0])


def test_evaluate_placement_examples():
    nbh = Neighborhood.isolated(1)
    rep = evaluate_placement([9], [[10.0], [0.0]], 1.0, nbh)
    np.testing.assert_allclose(rep.per_frame["rate"], [0.1, 0.0])
    assert rep.mean_rate == pytest.approx(0.05)
    assert rep.aggregate["overall_rate"] == pytest.approx(0.1)
    zero = evaluate_placement([1], np.zeros((3, 1)), 1.0, nbh)
    assert zero.aggregate["total_rejected"] == 0.0 and zero.mean_rate == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_more_servers_never_reject_more(seed):
    rng = np.random.default_rng(seed)
    M = int(rng.integers(2, 6))
    nbh = Neighborhood(random_omega(rng, M, p=0.5))
    frames = rng.uniform(0, 6, size=(5, M))
    s = rng.integers(0, 3, size=M)
    a = evaluate_frames(s, frames, 1.0, nbh)["rejected"].to_numpy()
    b = evaluate_frames(2 * s, frames, 1.0, nbh)["rejected"].to_numpy()
    assert (b <= a + 1e-9).all()


def _plan(rows, initial=None):
    rows = [np.asarray(r) for r in rows]
    slots = [SlotPlan(t, int(r.sum()), 0.0, 0.0, r) for t, r in enumerate(rows)]
    return SchedulePlan(slots, rows[0] if initial is None else np.asarray(initial))


def test_evaluate_schedule_uses_slot_of_day():
    nbh = Neighborhood.isolated(1)
    plan = _plan([[1], [3]])
    rep = evaluate_schedule(plan, [[2.0], [2.0], [2.0], [2.0]], 1.0, nbh)
    np.testing.assert_allclose(rep.per_frame["rate"], [0.5, 0.0, 0.5, 0.0])
    with pytest.raises(ValueError):
        evaluate_schedule(plan, np.ones((2, 2)), 1.0, nbh)


def test_always_on_never_rejects_more_than_a_schedule():
    rng = np.random.default_rng(5)
    nbh = Neighborhood(random_omega(rng, 4, p=0.5))
    cap = np.array([3, 2, 2, 1])
    trace = rng.uniform(0, 3, size=(6, 4))
    sched = _plan([np.minimum(cap, rng.integers(0, 3, size=4)) for _ in range(3)])
    on = evaluate_schedule(always_on_plan(cap, 3), trace, 1.0, nbh).per_frame["rejected"].to_numpy()
    off = evaluate_schedule(sched, trace, 1.0, nbh).per_frame["rejected"].to_numpy()
    assert (on <= off + 1e-9).all()


def test_random_policy_is_seeded():
    xy = np.random.default_rng(0).uniform(size=(6, 2))
    nbh = Neighborhood.full(6)
    a = baseline_place(PolicySpec("Random", seed=3), xy, np.ones(6), nbh, PlacementParams(10, 1.0)).s
    b = baseline_place(PolicySpec("Random", seed=3), xy, np.ones(6), nbh, PlacementParams(10, 1.0)).s
    assert a.sum() == 10
    np.testing.assert_array_equal(a, b)


def test_single_cluster_puts_every_server_at_one_station():
    xy = np.random.default_rng(1).uniform(size=(5, 2))
    s = baseline_place(PolicySpec("Clustering", k=1), xy, np.ones(5), Neighborhood.full(5),
                       PlacementParams(7, 1.0)).s
    assert s.sum() == 7 and np.count_nonzero(s) == 1


def test_traffic_aware_clusters_follow_load():
    xy = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]])
    data = np.array([[3.0, 3.0, 1.0, 1.0]])
    s = baseline_place(PolicySpec("TwithoutLB", k=2), xy, data, Neighborhood.full(4), PlacementParams(4, 1.0)).s
    assert s[:2].sum() == 3 and s[2:].sum() == 1


def test_uniform_zones_split_evenly():
    xy = np.array([[0.2, 0.2], [0.3, 0.3], [5.2, 0.2], [5.3, 0.3]])
    s = baseline_place(PolicySpec("Uniform", zone_size=1.0), xy, np.ones(4), Neighborhood.full(4),
                       PlacementParams(6, 1.0)).s
    assert s[:2].sum() == 3 and s[2:].sum() == 3


def test_policy_validation():
    with pytest.raises(ValueError):
        PolicySpec("Greedy")
    with pytest.raises(ValueError):
        PolicySpec("Clustering")
    with pytest.raises(ValueError):
        PolicySpec("Uniform")


def test_lp_policies_place_exactly_K():
    rng = np.random.default_rng(7)
    xy = rng.uniform(0, 3, size=(6, 2))
    nbh = Neighborhood(random_omega(rng, 6, p=0.4))
    data = rng.uniform(0, 5, size=(3, 6))
    for kind in ("TwithLB", "RO_RP", "RO_only", "RP_only"):
        for scheme in ("srpf", "mincost"):
            s = baseline_place(PolicySpec(kind, scheme=scheme), xy, data, nbh, PlacementParams(11, 1.0)).s
            assert s.sum() == 11 and (s >= 0).all()


def test_required_servers_scans_grid():
    nbh = Neighborhood.isolated(2)
    xy = np.zeros((2, 2))
    frames = np.array([[2.0, 2.0]])
    K, rates = required_servers(PolicySpec("TwithLB"), xy, frames, nbh, 1.0, frames, [2, 3, 4, 5])
    assert K == 4 and sorted(rates) == [2, 3, 4]
    assert rates[2] == pytest.approx(0.5)
    assert required_servers(PolicySpec("TwithLB"), xy, frames, nbh, 1.0, frames, [2, 3])[0] is None
