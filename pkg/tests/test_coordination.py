import itertools
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aimsim.coordination import (
    WEIGHT_PROFILES,
    BatchTooLarge,
    SchedulingWeights,
    combined_round,
    count_linear_extensions,
    ddswa_round,
    fifo_round,
    front_set,
    linear_extensions,
    min_wait_time,
    precedence,
    prune_scheduled,
    weighted_velocity_coeff,
)
from aimsim.model import ScheduleEntry, default_geometry
from aimsim.ocp import BatchVehicle, OcpSpec, solve
from aimsim.safety import intersection_overlap_ok

from batches import coop_batch, random_batch

GEO = default_geometry()
W12 = WEIGHT_PROFILES["comparison12"][1]
RATES = {lane: 0.1 for lane in GEO.lanes}


def _bv(vid, lane, x, v=11.11, t_arr=0.0, pred=None, t0=0.0):
    spec = OcpSpec(horizon=30.0, dt=0.1, x0=x, v0=v, t0=t0)
    return BatchVehicle(vid, lane, spec, predecessor_id=pred, t_arrival=t_arr)


def test_table_weights():
    w = W12
    assert (w.w_x, w.w_v, w.w_t, w.w_n, w.w_s, w.w_sigma, w.w_w, w.w_l) == (0.1, 5, 3, 4.5, 6, 40, 0.5, 0.02)
    with pytest.raises(ValueError):
        SchedulingWeights(w_x=-1.0)


def test_front_set_examples():
    assert front_set([]) == []
    lane = [_bv(1, 2, -50), _bv(2, 2, -30), _bv(3, 2, -10)]
    assert [v.id for v in front_set(lane)] == [3]
    spread = [_bv(i, lane, -20) for i, lane in enumerate(GEO.lanes)]
    assert len(front_set(spread)) == 4


def test_min_wait_time_examples():
    assert min_wait_time(2, [], 9.0, GEO)[0] == 0.0
    assert min_wait_time(2, [ScheduleEntry(1, 5, 8.0, 11.0)], 9.0, GEO) == (2.0, 1)
    s = [ScheduleEntry(1, 5, 5.0, 8.0), ScheduleEntry(2, 11, 10.0, 12.0)]
    assert min_wait_time(2, s, 9.0, GEO)[0] == pytest.approx(3.0)
    # compatible and same-lane entries are ignored
    assert min_wait_time(2, [ScheduleEntry(3, 8, 9.0, 15.0), ScheduleEntry(4, 2, 9.0, 15.0)], 9.0, GEO)[0] == 0.0


def _precedence_case(tau):
    t_C = 10.0
    veh = _bv(1, 2, -30.0, v=10.0, t_arr=t_C - 4.0)
    queue = [_bv(2, 2, -40.0), _bv(3, 2, -50.0)]
    sched = [ScheduleEntry(9, 5, t_C - 1.0, t_C + tau)] if tau > 0 else []
    return precedence(veh, [veh] + queue, W12, sched, {2: 0.05}, t_C, GEO)[0]


def test_precedence_example():
    bd = _precedence_case(2.0)
    assert (bd.distance, bd.velocity, bd.waited, bd.queue, bd.separation, bd.lane_rate, bd.tau) == \
        (30.0, 10.0, 4.0, 2, 15.0, 0.05, 2.0)
    assert bd.precedence == pytest.approx(165.0)
    assert bd.demand == pytest.approx(166.0)
    free = _precedence_case(0.0)
    assert free.precedence == pytest.approx(166.0) and free.demand == pytest.approx(166.0)


def test_precedence_all_zero():
    veh = _bv(1, 2, -60.0, v=0.0, t_arr=0.0)
    bd = precedence(veh, [veh], W12, [], {2: 0.0}, 0.0, GEO)[0]
    assert bd.precedence == 0.0 and bd.separation == 0.0


def test_weighted_velocity_coeff_examples():
    assert weighted_velocity_coeff([166.0], 0.02, 1.0) == pytest.approx(3.32)
    assert weighted_velocity_coeff([0.0, 0.0], 0.5, 1.0) == 0.0
    assert weighted_velocity_coeff([100.0, 200.0], 0.02, 1.0) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        weighted_velocity_coeff([], 0.02, 1.0)


def test_prune_examples():
    past = [ScheduleEntry(1, 2, 1.0, 2.0), ScheduleEntry(2, 5, 2.0, 3.0)]
    assert prune_scheduled(past, 5.0) == []
    mixed = past + [ScheduleEntry(3, 8, 4.0, 6.0)]
    assert [e.vehicle for e in prune_scheduled(mixed, 5.0)] == [3]


@given(st.lists(st.tuples(st.sampled_from(GEO.lanes), st.floats(0, 50), st.floats(0.1, 5)), max_size=10),
       st.floats(0, 60), st.sampled_from(GEO.lanes))
def test_prune_preserves_wait_time(items, t_now, lane):
    sched = [ScheduleEntry(i, l, t, t + d) for i, (l, t, d) in enumerate(items)]
    assert min_wait_time(lane, sched, t_now, GEO)[0] == min_wait_time(lane, prune_scheduled(sched, t_now), t_now,
                                                                       GEO)[0]


def _assert_vs_safe(entries):
    for a, b in itertools.combinations(entries, 2):
        if GEO.incompatible(a.lane, b.lane):
            assert intersection_overlap_ok(a.t_entry, a.t_exit, b.t_entry, b.t_exit, 1e-6)


def test_single_vehicle_round_is_single_solve():
    bv = _bv(1, 2, -40.0)
    out = ddswa_round([bv], [], W12, 0.0, GEO, RATES)
    direct = solve(replace(bv.spec, earliest_entry=0.0, require_exit_by_horizon=True, entry_prevention=False,
                           w_v=out.iterations[0]["w_v"]))
    assert np.allclose(out.plans[1].trajectory.x, direct.trajectory.x)
    f = fifo_round([bv], [], 0.0, GEO)
    c = combined_round([bv], [], 0.0, GEO)
    assert f.order == c.order == [1]


def test_ddswa_higher_precedence_goes_first():
    a = _bv(1, 5, -30.0, t_arr=-3.0)  # closer and waited longer
    b = _bv(2, 2, -45.0, t_arr=-1.0)
    out = ddswa_round([b, a], [], W12, 0.0, GEO, RATES)
    assert out.order == [1, 2]
    e = {en.vehicle: en for en in out.entries}
    assert e[2].t_entry >= e[1].t_exit - 1e-6


def test_ddswa_ties_go_to_lowest_id():
    a = _bv(7, 5, -40.0)
    b = _bv(3, 2, -40.0)
    out = ddswa_round([a, b], [], W12, 0.0, GEO, RATES)
    assert out.order[0] == 3


def test_ddswa_compatible_lanes_do_not_interact():
    sched = [ScheduleEntry(50, 5, -1.0, 1.5)]
    batch = [_bv(1, 2, -40.0), _bv(2, 8, -42.0)]
    out = ddswa_round(batch, sched, W12, 0.0, GEO, RATES)
    for bv in batch:
        alone = ddswa_round([bv], sched, W12, 0.0, GEO, RATES)
        assert out.entries[out.order.index(bv.id)].t_entry == pytest.approx(alone.entries[0].t_entry, abs=1e-6)


def test_fifo_first_arrival_first():
    a = _bv(1, 5, -30.0, t_arr=2.0)
    b = _bv(2, 2, -45.0, t_arr=1.0)
    assert fifo_round([a, b], [], 3.0, GEO).order == [2, 1]


def test_linear_extension_counts():
    two_by_two = [_bv(1, 2, -10, v=5.0), _bv(2, 2, -30, v=5.0, pred=1), _bv(3, 5, -10, v=5.0),
                  _bv(4, 5, -30, v=5.0, pred=3)]
    assert count_linear_extensions(two_by_two) == 6
    orders = list(linear_extensions(two_by_two))
    assert len(orders) == len(set(orders)) == 6
    for o in orders:
        assert o.index(1) < o.index(2) and o.index(3) < o.index(4)
    out = combined_round(two_by_two, [], 0.0, GEO)
    assert out.iterations[0]["orders_total"] == 6


def test_combined_enumerates_both_orders_of_a_conflicting_pair():
    batch = [_bv(1, 2, -40.0), _bv(2, 5, -35.0)]
    out = combined_round(batch, [], 0.0, GEO)
    assert out.iterations[0]["orders_feasible"] == 2
    best = out.total_objective(1.0, 0.0, 0.0, 30.0)
    for order in ([1, 2], [2, 1]):
        f = fifo_round([replace(b, t_arrival=float(order.index(b.id))) for b in batch], [], 0.0, GEO)
        assert f.order == order
        assert best >= f.total_objective(1.0, 0.0, 0.0, 30.0) - 1e-6


def test_combined_refuses_large_batches():
    batch = [_bv(i, 2, -5.0 - 5.0 * i) for i in range(9)]
    with pytest.raises(BatchTooLarge):
        combined_round(batch, [], 0.0, GEO, max_batch=8)


@pytest.mark.parametrize("seed", range(4))
def test_rounds_keep_scheduled_set_safe(seed):
    batch, sched = random_batch(np.random.default_rng(seed), max_size=5)
    for out in (ddswa_round(batch, sched, W12, 0.0, GEO, RATES), fifo_round(batch, sched, 0.0, GEO),
                combined_round(batch, sched, 0.0, GEO)):
        _assert_vs_safe(sched + out.entries)
        assert sorted(out.order + out.held) == sorted(b.id for b in batch)


@pytest.mark.parametrize("seed", range(3))
def test_ddswa_one_vehicle_per_iteration(seed):
    batch, sched = coop_batch(np.random.default_rng(seed))
    out = ddswa_round(batch, sched, W12, 3.0, GEO, RATES)
    assert len(out.iterations) == len(batch)
    chosen = [it["chosen"] for it in out.iterations]
    assert sorted(chosen) == sorted(b.id for b in batch)
    assert [c for c in chosen if c not in out.held] == out.order


@pytest.mark.parametrize("seed", range(3))
def test_single_lane_orders_agree(seed):
    batch, sched = random_batch(np.random.default_rng(seed), max_size=4, lanes=(2,))
    outs = [ddswa_round(batch, sched, W12, 0.0, GEO, RATES), fifo_round(batch, sched, 0.0, GEO),
            combined_round(batch, sched, 0.0, GEO)]
    assert outs[0].order == outs[1].order == outs[2].order


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.1, 10.0]))
def test_ddswa_order_is_scale_invariant(seed, lam):
    batch, sched = coop_batch(np.random.default_rng(seed), max_size=5)
    base = ddswa_round(batch, sched, W12, 3.0, GEO, RATES)
    scaled = ddswa_round(batch, sched, W12.scaled(lam), 3.0, GEO, RATES)
    assert base.order == scaled.order and base.held == scaled.held


def test_ddswa_is_deterministic():
    batch, sched = coop_batch(np.random.default_rng(5))
    a = ddswa_round(batch, sched, W12, 3.0, GEO, RATES)
    b = ddswa_round(batch, sched, W12, 3.0, GEO, RATES)
    assert a.order == b.order
    for vid in a.plans:
        assert np.array_equal(a.plans[vid].trajectory.x, b.plans[vid].trajectory.x)
