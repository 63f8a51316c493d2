"""Shared test helpers: tiny random instances with integer data (so the
integer-grid oracle is exactly comparable to continuous schedules) and pools
built from explicit scenario enumerations."""

import itertools
import math

import numpy as np

from dsvrptw.instances import Instance, Request
from dsvrptw.scenarios import Scenario, ScenarioPool, latest_useful_epoch


def tiny_instance(rng, n_customers=None, horizon=None, vehicles=1,
                  det_requests=None, tight=False):
    """Random integer-data instance small enough for the exact oracle."""
    n = int(n_customers if n_customers is not None else rng.integers(2, 6))
    h = int(horizon if horizon is not None else rng.integers(8, 13))
    travel = rng.integers(1, 4, size=(n + 1, n + 1)).astype(float)
    np.fill_diagonal(travel, 0.0)
    # positive durations keep the one-decision-per-epoch oracle exactly
    # equivalent to continuous schedules (zero durations would let the
    # greedy evaluator chain same-vertex services within one epoch)
    service = rng.integers(1, 3, size=n + 1).astype(np.int64)
    service[0] = 0
    demand = rng.integers(0, 4, size=n + 1).astype(float)
    demand[0] = 0.0
    tw_early = np.ones(n + 1, dtype=np.int64)
    tw_late = np.full(n + 1, h, dtype=np.int64)
    for i in range(1, n + 1):
        e = int(rng.integers(1, max(2, h - 3)))
        width = int(rng.integers(1, 5 if tight else 8))
        tw_early[i] = e
        tw_late[i] = min(h, e + width)
    det = []
    if det_requests:
        verts = rng.choice(np.arange(1, n + 1), size=min(det_requests, n),
                           replace=False)
        det = [Request(vertex=int(v), reveal_epoch=0, arrival_index=i)
               for i, v in enumerate(verts)]
    return Instance(
        horizon=h,
        travel=travel,
        demand=demand,
        service=service,
        tw_early=tw_early,
        tw_late=tw_late,
        vehicle_count=vehicles,
        capacity=float(rng.integers(6, 12)),
        reveal_prob=np.zeros((h + 1, n + 1)),
        deterministic_requests=tuple(det),
        name="tiny",
    )


def with_cells(instance, cells, p=0.5):
    """Copy of the instance with reveal probability p at the given
    (vertex, epoch) cells."""
    prob = np.zeros_like(instance.reveal_prob)
    for vertex, epoch in cells:
        prob[epoch, vertex] = p
    return Instance(
        horizon=instance.horizon, travel=instance.travel, demand=instance.demand,
        service=instance.service, tw_early=instance.tw_early,
        tw_late=instance.tw_late, vehicle_count=instance.vehicle_count,
        capacity=instance.capacity, reveal_prob=prob,
        deterministic_requests=instance.deterministic_requests,
        dynamic_requests=instance.dynamic_requests, name=instance.name)


def pick_cells(instance, rng, max_cells=2):
    """Choose stochastic (vertex, epoch) cells within each vertex's latest
    useful epoch; empty when nothing fits."""
    options = []
    for v in range(1, instance.n + 1):
        bound = min(latest_useful_epoch(instance, v), instance.horizon)
        for t in range(1, bound + 1):
            options.append((v, t))
    if not options:
        return []
    k = int(rng.integers(1, max_cells + 1))
    idx = rng.choice(len(options), size=min(k, len(options)), replace=False)
    return [options[i] for i in np.atleast_1d(idx)]


def enumerate_scenarios(cells, start_epoch=1):
    """Full enumeration of the independent p=0.5 cells: all subsets, all
    equiprobable."""
    scenarios = []
    for mask in itertools.product((0, 1), repeat=len(cells)):
        reveals = tuple((v, t) for bit, (v, t) in zip(mask, cells) if bit)
        scenarios.append(Scenario(start_epoch=start_epoch, reveals=reveals))
    return scenarios


def pool_from(scenarios, start_epoch=1, resample_period=10, seed=0):
    return ScenarioPool(
        scenarios=tuple(scenarios), pool_size=len(scenarios),
        resample_period=resample_period, start_epoch=start_epoch,
        rng=np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# Independent reference implementations (kept deliberately naive)

def ref_schedule_df(instance, start_vertex, free, load, visits, ready):
    """Straight-line drive-first pass; returns (feasible, times, return_time)."""
    t = max(free, ready)
    cur = start_vertex
    times = []
    for v, min_start in visits:
        t = t + instance.travel[cur, v]
        s = max(t, float(instance.tw_early[v]), min_start)
        if s > instance.tw_late[v] + 1e-9:
            return False, times, math.inf
        load += instance.demand[v]
        if load > instance.capacity + 1e-9:
            return False, times, math.inf
        t = s + float(instance.service[v])
        times.append((t - float(instance.service[v]),))
        cur = v
    ret = t + instance.travel[cur, 0]
    if ret > float(instance.tw_late[0]) + 1e-9:
        return False, times, math.inf
    return True, times, ret


def ref_best_insertion(instance, plan, states, vertex, min_start, ready):
    """Exhaustive enumeration over every slot; cost via full route sums."""
    best = None
    for r, route in enumerate(plan.routes):
        base = [(v.vertex, float(v.request.reveal_epoch) if v.request else 0.0)
                for v in route]
        st = states[r]

        def total_cost(seq):
            legs = [st.vertex] + [v for v, _m in seq] + [0]
            return sum(instance.travel[a, b] for a, b in zip(legs, legs[1:]))

        for slot in range(len(base) + 1):
            trial = base[:slot] + [(vertex, min_start)] + base[slot:]
            ok, _times, _ret = ref_schedule_df(instance, st.vertex, st.free,
                                               st.load, trial, ready)
            if not ok:
                continue
            cost = total_cost(trial) - total_cost(base)
            if best is None or cost < best[0] - 1e-9:
                best = (cost, r, slot)
    return best
