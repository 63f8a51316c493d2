import itertools

import numpy as np
import pytest

from conftest import tiny_instance
from dsvrptw.controller import (ALGORITHM_IDS, ControllerConfig, EpochEvent,
                                choose_request_expectation, handle_requests,
                                run_gls, run_online)
from dsvrptw.instances import (CLASS_PROFILES, Instance, Request,
                               build_nonanticipation_fixture,
                               NONANTICIPATION_SCENARIOS, TRAVEL_TO_B,
                               TRAVEL_TO_C, generate_dynamic_instance,
                               make_synthetic_base)
from dsvrptw.oracle import Action, OracleGuard, OracleState
from dsvrptw.plan import RoutePlan, VehicleState, depot_states
from dsvrptw.scenarios import new_pool


def line_instance(windows, travel, horizon=30, service=1, dynamic=(),
                  deterministic=(), vehicles=1):
    n = len(windows)
    service_arr = np.full(n + 1, service, dtype=np.int64)
    service_arr[0] = 0
    det = tuple(Request(vertex=v, reveal_epoch=0, arrival_index=i)
                for i, v in enumerate(deterministic))
    dyn = tuple(Request(vertex=v, reveal_epoch=t, arrival_index=i)
                for i, (v, t) in enumerate(dynamic))
    return Instance(
        horizon=horizon, travel=travel,
        demand=np.array([0.0] + [1.0] * n),
        service=service_arr,
        tw_early=np.array([1] + [w[0] for w in windows], dtype=np.int64),
        tw_late=np.array([horizon] + [w[1] for w in windows], dtype=np.int64),
        vehicle_count=vehicles, capacity=50.0,
        reveal_prob=np.zeros((horizon + 1, n + 1)),
        deterministic_requests=det, dynamic_requests=dyn, name="line")


def quick_config(alg="GSA-df", **kw):
    defaults = dict(seed=1, pool_size=4, resample_period=4, per_epoch_budget=6,
                    offline_budget=6, insertion_budget=4)
    defaults.update(kw)
    return ControllerConfig.for_algorithm(alg, **defaults)


def test_no_requests_zero_rejections():
    travel = np.full((3, 3), 2.0)
    np.fill_diagonal(travel, 0.0)
    inst = line_instance([(1, 20), (1, 20)], travel)
    for alg in ("GSA-df", "GLS-df", "EXP"):
        log, rep = run_online(inst, quick_config(alg))
        assert rep.rejections == 0
        assert rep.accepted_count == 0
        assert rep.final_travel_cost == 0.0


def test_single_deterministic_request_served_offline():
    travel = np.full((2, 2), 3.0)
    np.fill_diagonal(travel, 0.0)
    inst = line_instance([(5, 15)], travel, deterministic=(1,))
    log, rep = run_online(inst, quick_config())
    assert rep.rejections == 0
    assert rep.accepted_count == 1
    assert log.records[0].epoch == 0
    assert len(log.records[0].accepted) == 1
    assert rep.final_travel_cost == pytest.approx(6.0)


def test_expired_window_request_rejected():
    travel = np.full((2, 2), 2.0)
    np.fill_diagonal(travel, 0.0)
    inst = line_instance([(1, 6)], travel, dynamic=((1, 12),))
    log, rep = run_online(inst, quick_config())
    assert rep.rejections == 1
    decided = log.decisions()
    assert decided["1@12#0"] == "reject"


def test_arrival_order_foreclosure():
    # one vehicle, two epoch-2 reveals; serving either forecloses the other
    travel = np.array([
        [0.0, 2.0, 2.0],
        [2.0, 0.0, 10.0],
        [2.0, 10.0, 0.0],
    ])
    inst = line_instance([(8, 9), (8, 9)], travel, horizon=30,
                         dynamic=((1, 2), (2, 2)))
    # exhaustive check: each alone fits, both together never do
    def df_ok(seq):
        t, cur = 1.0, 0
        for v in seq:
            t = max(t + travel[cur, v], 8.0)
            if t > 9.0:
                return False
            t += 1.0
            cur = v
        return t + travel[cur, 0] <= 30.0
    assert df_ok([1]) and df_ok([2])
    assert not any(df_ok(list(p)) for p in itertools.permutations([1, 2]))

    log, rep = run_online(inst, quick_config())
    decided = log.decisions()
    assert decided["1@2#0"].startswith("accept")
    assert decided["2@2#1"] == "reject"


def test_runs_deterministic_byte_identical():
    base = make_synthetic_base(8, seed=2, horizon=60, vehicles=2)
    inst = generate_dynamic_instance(base, CLASS_PROFILES[6], seed=5, horizon=60)
    for alg in ("GSA-df", "GLS-df", "EXP"):
        cfg = quick_config(alg, seed=7, per_epoch_budget=10)
        log1, rep1 = run_online(inst, cfg)
        log2, rep2 = run_online(inst, cfg)
        assert log1.to_text() == log2.to_text()
        assert rep1.rejections == rep2.rejections
        assert [e["incumbent"] for e in rep1.events] == \
               [e["incumbent"] for e in rep2.events]


def test_every_request_decided_at_reveal_epoch():
    base = make_synthetic_base(10, seed=3, horizon=60, vehicles=2)
    inst = generate_dynamic_instance(base, CLASS_PROFILES[4], seed=9, horizon=60)
    log, rep = run_online(inst, quick_config())
    log.validate_unique_decisions(inst.all_requests)
    decided_epochs = {}
    for rec in log.records:
        for req, _v in rec.accepted:
            decided_epochs[req.key()] = rec.epoch
        for req in rec.rejected:
            decided_epochs[req.key()] = rec.epoch
    for req in inst.all_requests:
        assert decided_epochs[req.key()] == req.reveal_epoch
    assert rep.rejections + rep.accepted_count == len(inst.all_requests)


def test_relocation_and_strategy_variants_run():
    base = make_synthetic_base(8, seed=4, horizon=60, vehicles=2)
    inst = generate_dynamic_instance(base, CLASS_PROFILES[6], seed=3, horizon=60)
    for alg in ("GSA-dfr", "GSA-ro", "GSA-wf", "GSA-cw"):
        log, rep = run_online(inst, quick_config(alg, per_epoch_budget=8))
        log.validate_unique_decisions(inst.all_requests)


def test_gls_without_dynamic_requests_is_static():
    travel = np.full((4, 4), 3.0)
    np.fill_diagonal(travel, 0.0)
    inst = line_instance([(2, 25), (2, 25), (2, 25)], travel, horizon=40,
                         deterministic=(1, 2, 3))
    log1, rep1 = run_gls(inst, quick_config("GLS-df", per_epoch_budget=20))
    log2, rep2 = run_gls(inst, quick_config("GLS-df", per_epoch_budget=20))
    assert rep1.rejections == 0
    assert log1.to_text() == log2.to_text()


def test_handle_requests_empty_event_keeps_plan():
    rng = np.random.default_rng(0)
    inst = tiny_instance(rng, n_customers=3, horizon=12, det_requests=1)
    cfg = quick_config()
    pool = new_pool(inst, 4, 4, 1, np.random.default_rng(1))
    plan = RoutePlan.empty(inst.vehicle_count)
    accepted, rejected, out = handle_requests(
        inst, cfg, plan, depot_states(inst), [False] * inst.vehicle_count,
        pool, EpochEvent(epoch=1))
    assert accepted == [] and rejected == []
    assert out.routes == plan.routes


def test_expectation_single_candidate_returned():
    inst = build_nonanticipation_fixture()
    st = OracleState(epoch=1, vehicles=(VehicleState(0, 1.0, 0.0),))
    guard = OracleGuard(max_vertices=9, max_horizon=40, max_scenarios=2)
    best, scores = choose_request_expectation(
        inst, [("only", Action.travel(TRAVEL_TO_B))], NONANTICIPATION_SCENARIOS,
        state=st, guard=guard)
    assert best == "only"


def test_expectation_prefers_two_stage_artifact():
    inst = build_nonanticipation_fixture()
    st = OracleState(epoch=1, vehicles=(VehicleState(0, 1.0, 0.0),))
    guard = OracleGuard(max_vertices=9, max_horizon=40, max_scenarios=2)
    cands = [("travel-to-b", Action.travel(TRAVEL_TO_B)),
             ("travel-to-c", Action.travel(TRAVEL_TO_C))]
    best, scores = choose_request_expectation(
        inst, cands, NONANTICIPATION_SCENARIOS, state=st, guard=guard)
    assert best == "travel-to-b"
    assert scores["travel-to-b"] == pytest.approx(0.0)
    assert scores["travel-to-c"] == pytest.approx(1.0)


def test_expectation_empty_scenarios_scores_known_work():
    rng = np.random.default_rng(1)
    inst = tiny_instance(rng, n_customers=3, horizon=10)
    cands = [("wait", Action(moves=(("wait",),))),
             ("go", Action(moves=(("travel", 1),)))]
    st = OracleState(epoch=1, vehicles=depot_states(inst))
    best, scores = choose_request_expectation(inst, cands, [()], state=st)
    assert set(scores) == {"wait", "go"}
    assert min(scores.values()) == 0.0


def test_expectation_truncation_warns(caplog):
    rng = np.random.default_rng(2)
    inst = tiny_instance(rng, n_customers=3, horizon=10)
    st = OracleState(epoch=1, vehicles=depot_states(inst))
    cands = [(f"c{i}", Action(moves=(("wait",),))) for i in range(10)]
    with caplog.at_level("WARNING"):
        best, scores = choose_request_expectation(inst, cands, [()], state=st,
                                                  budget=3)
    assert len(scores) < 10
    assert any("truncated" in r.message for r in caplog.records)


def test_algorithm_id_round_trip():
    for alg in ALGORITHM_IDS:
        cfg = ControllerConfig.for_algorithm(alg)
        assert cfg.algorithm_id() == alg


def test_relocation_waypoint_lingers_until_postponed_departure():
    # depot; waypoint 1; customer 2 with window [10, 20]; all legs 3 long.
    # Under relocation-only waiting the vehicle parks on the waypoint at t=4
    # and leaves at 17 so service starts exactly at the window close.
    travel = np.full((3, 3), 3.0)
    np.fill_diagonal(travel, 0.0)
    inst = Instance(
        horizon=30, travel=travel, demand=np.array([0.0, 0.0, 1.0]),
        service=np.array([0, 0, 2]), tw_early=np.array([1, 1, 10]),
        tw_late=np.array([30, 30, 20]), vehicle_count=1, capacity=5.0,
        reveal_prob=np.zeros((31, 3)))
    from dsvrptw.controller import _OnlineRun
    from dsvrptw.plan import RELOCATION, Visit
    run = _OnlineRun(inst, quick_config("GSA-ro"))
    req = Request(vertex=2, reveal_epoch=0, arrival_index=0)
    run.plan = RoutePlan(
        ((Visit(vertex=1, kind=RELOCATION), Visit(vertex=2, request=req)),),
        1, "RO", True)
    parked_epochs = []
    for t in range(1, inst.horizon + 1):
        run.plan = run.plan.advanced_to(t)
        run.execute_epoch(t)
        if run.states[0].vertex == 1 and run.plan.visit_count == 2:
            parked_epochs.append(t)
    assert parked_epochs and parked_epochs[0] == 1
    assert parked_epochs[-1] == 16            # departs during epoch 17
    assert run.served[req.key()] == pytest.approx(20.0)
    assert run.states[0] == VehicleState(0, 30.0, 1.0)
    assert run.plan.visit_count == 0
    assert run.traveled == pytest.approx(9.0)


def test_wallclock_mode_completes():
    base = make_synthetic_base(6, seed=8, horizon=40, vehicles=2)
    inst = generate_dynamic_instance(base, CLASS_PROFILES[6], seed=2, horizon=40)
    cfg = ControllerConfig.for_algorithm(
        "GSA-df", seed=1, pool_size=4, resample_period=4,
        clock_mode="wallclock", epoch_seconds=0.005, offline_seconds=0.01)
    log, rep = run_online(inst, cfg)
    log.validate_unique_decisions(inst.all_requests)
    assert rep.rejections + rep.accepted_count == len(inst.all_requests)


def test_gls_competitive_on_low_dod():
    # with many a priori requests and few reveals, the travel-cost baseline
    # stays within one mean rejection of the scenario-based rule
    base = make_synthetic_base(12, seed=21, horizon=60, vehicles=2)
    inst = generate_dynamic_instance(base, CLASS_PROFILES[1], seed=31, horizon=60)
    assert len(inst.deterministic_requests) > 0
    gsa, gls = [], []
    for seed in range(1, 6):
        cfg = ControllerConfig.for_algorithm(
            "GSA-df", seed=seed, pool_size=10, resample_period=10,
            per_epoch_budget=40, offline_budget=40)
        _, rep = run_online(inst, cfg)
        gsa.append(rep.rejections)
        cfg = ControllerConfig.for_algorithm(
            "GLS-df", seed=seed, pool_size=10, resample_period=10,
            per_epoch_budget=40, offline_budget=40)
        _, rep = run_online(inst, cfg)
        gls.append(rep.rejections)
    assert abs(sum(gsa) / 5 - sum(gls) / 5) <= 1.0
