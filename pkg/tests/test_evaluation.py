import math

import numpy as np
import pytest

from conftest import (enumerate_scenarios, pick_cells, pool_from,
                      ref_best_insertion, tiny_instance, with_cells)
from dsvrptw.evaluation import Evaluator, insertion_candidates, qbar, qbar_trace, \
    try_to_serve
from dsvrptw.instances import Instance, Request
from dsvrptw.plan import RoutePlan, Visit, compute_schedule, depot_states
from dsvrptw.scenarios import Scenario


def simple_instance(travel, windows, horizon=20, service=None, demand=None,
                    vehicles=1, capacity=10.0):
    n = travel.shape[0] - 1
    service = service if service is not None else np.zeros(n + 1, dtype=np.int64)
    demand = demand if demand is not None else np.array([0.0] + [1.0] * n)
    return Instance(
        horizon=horizon, travel=travel, demand=demand, service=service,
        tw_early=np.array([1] + [w[0] for w in windows], dtype=np.int64),
        tw_late=np.array([horizon] + [w[1] for w in windows], dtype=np.int64),
        vehicle_count=vehicles, capacity=capacity,
        reveal_prob=np.zeros((horizon + 1, n + 1)))


def plan_of(instance, vertices, strategy="DF", start=1):
    visits = tuple(Visit(vertex=v,
                         request=Request(vertex=v, reveal_epoch=0, arrival_index=i))
                   for i, v in enumerate(vertices))
    routes = (visits,) + ((),) * (instance.vehicle_count - 1)
    return RoutePlan(routes, plan_start_epoch=start, strategy=strategy)


# ---------------------------------------------------------------------------


def test_qbar_empty_scenarios_zero():
    rng = np.random.default_rng(0)
    inst = tiny_instance(rng, n_customers=3, horizon=12)
    plan = RoutePlan.empty(inst.vehicle_count)
    pool = pool_from([Scenario(start_epoch=1) for _ in range(4)])
    res = qbar(plan, pool, inst)
    assert res.mean_rejections == 0.0
    assert res.per_scenario == (0, 0, 0, 0)


def test_qbar_insertable_vs_expired():
    # two-customer line: vertex 1 near, vertex 2 with a tight window
    travel = np.array([
        [0.0, 2.0, 2.0],
        [2.0, 0.0, 2.0],
        [2.0, 2.0, 0.0],
    ])
    inst = simple_instance(travel, windows=[(1, 18), (4, 6)], horizon=20)
    plan = plan_of(inst, [1])
    assert compute_schedule(plan, inst).feasible

    ok_pool = pool_from([Scenario(start_epoch=1, reveals=((2, 3),))])
    res = qbar(plan, ok_pool, inst)
    assert res.mean_rejections == 0.0

    late_pool = pool_from([Scenario(start_epoch=1, reveals=((2, 8),))])
    res = qbar(plan, late_pool, inst)
    assert res.mean_rejections == 1.0

    # cross-check by exhaustive insertion enumeration at the reveal epoch
    states = depot_states(inst)
    assert ref_best_insertion(inst, plan, states, 2, 3.0, 3.0) is not None
    assert ref_best_insertion(inst, plan, states, 2, 8.0, 8.0) is None


def test_qbar_infeasible_plan_sentinel():
    travel = np.array([[0.0, 9.0], [9.0, 0.0]])
    inst = simple_instance(travel, windows=[(1, 3)], horizon=20)
    plan = plan_of(inst, [1])
    pool = pool_from([Scenario(start_epoch=1)])
    res = qbar(plan, pool, inst)
    assert math.isinf(res.mean_rejections)
    assert not res.feasible


def test_qbar_pool_union_mean():
    rng = np.random.default_rng(1)
    for _ in range(20):
        inst = tiny_instance(rng, n_customers=4, horizon=12)
        cells = pick_cells(inst, rng, max_cells=2)
        if not cells:
            continue
        inst = with_cells(inst, cells)
        plan = RoutePlan.empty(inst.vehicle_count)
        scens = enumerate_scenarios(cells)
        pool_all = pool_from(scens)
        half = len(scens) // 2
        a = pool_from(scens[:half]) if half else None
        b = pool_from(scens[half:])
        res_all = qbar(plan, pool_all, inst)
        got = res_all.mean_rejections * len(scens)
        parts = qbar(plan, b, inst).mean_rejections * (len(scens) - half)
        if a is not None:
            parts += qbar(plan, a, inst).mean_rejections * half
        assert got == pytest.approx(parts)


def test_try_to_serve_empty_route():
    travel = np.array([[0.0, 3.0], [3.0, 0.0]])
    inst = simple_instance(travel, windows=[(1, 15)], horizon=20)
    plan = RoutePlan.empty(1)
    req = Request(vertex=1, reveal_epoch=2, arrival_index=0)
    res = try_to_serve(req, plan, inst)
    assert res is not None
    assert res.vehicle == 0 and res.slot == 0
    assert res.plan.routes[0][0].vertex == 1
    assert res.added_cost == pytest.approx(6.0)


def test_try_to_serve_picks_cheaper_position():
    # inserting vertex 3 between 1-2 costs 4, at the end costs 6
    travel = np.array([
        [0.0, 1.0, 6.0, 3.0],
        [1.0, 0.0, 6.0, 3.0],
        [6.0, 6.0, 0.0, 3.0],
        [3.0, 3.0, 3.0, 0.0],
    ])
    inst = simple_instance(travel, windows=[(1, 30), (1, 30), (1, 30)],
                           horizon=40)
    plan = plan_of(inst, [1, 2])
    req = Request(vertex=3, reveal_epoch=0, arrival_index=5)
    res = try_to_serve(req, plan, inst)
    assert res is not None
    assert [v.vertex for v in res.plan.routes[0]] == [1, 3, 2]
    assert res.added_cost == pytest.approx(0.0)  # 3+3-6


def test_try_to_serve_matches_enumeration_oracle():
    rng = np.random.default_rng(2)
    checked = 0
    ev = None
    while checked < 400:
        inst = tiny_instance(rng, n_customers=6, horizon=12,
                             vehicles=int(rng.integers(1, 3)))
        n_visits = int(rng.integers(0, 6))
        routes = [[] for _ in range(inst.vehicle_count)]
        for i in range(n_visits):
            v = int(rng.integers(1, inst.n + 1))
            routes[int(rng.integers(0, inst.vehicle_count))].append(
                Visit(vertex=v, request=Request(vertex=v, reveal_epoch=0,
                                                arrival_index=i)))
        plan = RoutePlan(tuple(tuple(r) for r in routes), 1, "DF")
        if not compute_schedule(plan, inst).feasible:
            continue
        total_slots = sum(len(r) + 1 for r in plan.routes)
        if total_slots > 8:
            continue
        req = Request(vertex=int(rng.integers(1, inst.n + 1)),
                      reveal_epoch=int(rng.integers(0, 5)), arrival_index=99)
        states = depot_states(inst)
        got = try_to_serve(req, plan, inst)
        min_start = float(max(plan.plan_start_epoch, req.reveal_epoch))
        want = ref_best_insertion(inst, plan, states, req.vertex, min_start,
                                  ready=min_start)
        if want is None:
            assert got is None
        else:
            assert got is not None
            assert (got.vehicle, got.slot) == (want[1], want[2])
            assert got.added_cost == pytest.approx(want[0])
        checked += 1


def test_insertion_candidates_scan_order():
    travel = np.full((4, 4), 2.0)
    np.fill_diagonal(travel, 0.0)
    inst = simple_instance(travel, windows=[(1, 30)] * 3, horizon=40, vehicles=2)
    plan = RoutePlan(((Visit(vertex=1, request=Request(1, 0, 0)),), ()), 1, "DF")
    req = Request(vertex=2, reveal_epoch=0, arrival_index=1)
    cands = insertion_candidates(req, plan, inst)
    assert [c[:2] for c in cands] == [(0, 0), (0, 1), (1, 0)]


def test_kernel_matches_python_trace():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 60:
        inst = tiny_instance(rng, n_customers=5, horizon=12,
                             vehicles=int(rng.integers(1, 3)),
                             det_requests=int(rng.integers(0, 3)))
        cells = pick_cells(inst, rng, max_cells=2)
        if not cells:
            continue
        inst = with_cells(inst, cells)
        plan = RoutePlan.empty(inst.vehicle_count)
        ev = Evaluator(inst)
        for req in inst.deterministic_requests:
            res = try_to_serve(req, plan, inst, evaluator=ev)
            if res is not None:
                plan = res.plan
        pool = pool_from(enumerate_scenarios(cells))
        fast = ev.qbar(plan, pool)
        slow, _traces = qbar_trace(plan, pool, inst)
        assert fast.per_scenario == slow.per_scenario
        assert fast.mean_rejections == pytest.approx(slow.mean_rejections)
        checked += 1


def test_mean_is_arithmetic_mean():
    rng = np.random.default_rng(4)
    inst = tiny_instance(rng, n_customers=4, horizon=12)
    cells = pick_cells(rng=np.random.default_rng(5), instance=inst, max_cells=2)
    if cells:
        inst = with_cells(inst, cells)
        pool = pool_from(enumerate_scenarios(cells))
        res = qbar(RoutePlan.empty(inst.vehicle_count), pool, inst)
        assert res.mean_rejections == pytest.approx(
            sum(res.per_scenario) / len(res.per_scenario))


def test_kernel_matches_trace_with_relocation_waypoints():
    from dsvrptw.plan import RELOCATION
    rng = np.random.default_rng(9)
    checked = 0
    while checked < 40:
        inst = tiny_instance(rng, n_customers=5, horizon=12,
                             vehicles=int(rng.integers(1, 3)))
        cells = pick_cells(inst, rng, max_cells=2)
        if not cells:
            continue
        inst = with_cells(inst, cells)
        routes = [[] for _ in range(inst.vehicle_count)]
        for i in range(int(rng.integers(1, 4))):
            v = int(rng.integers(1, inst.n + 1))
            routes[int(rng.integers(0, inst.vehicle_count))].append(
                Visit(vertex=v, request=Request(vertex=v, reveal_epoch=0,
                                                arrival_index=i)))
        # sprinkle waypoints; relocation-only keeps drive-first feasibility
        for _ in range(int(rng.integers(1, 3))):
            r = int(rng.integers(0, inst.vehicle_count))
            slot = int(rng.integers(0, len(routes[r]) + 1))
            routes[r].insert(slot, Visit(vertex=int(rng.integers(1, inst.n + 1)),
                                         kind=RELOCATION))
        plan = RoutePlan(tuple(tuple(r) for r in routes), 1, "RO", True)
        if not compute_schedule(plan, inst).feasible:
            continue
        pool = pool_from(enumerate_scenarios(cells))
        ev = Evaluator(inst)
        fast = ev.qbar(plan, pool)
        slow, _ = qbar_trace(plan, pool, inst)
        assert fast.per_scenario == slow.per_scenario
        checked += 1
