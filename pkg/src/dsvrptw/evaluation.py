"""Scenario-averaged evaluation of a plan, and best-position insertion.

``qbar`` simulates the committed state plus planned future routes against
every scenario in a pool: sampled reveals are greedily inserted at their
cheapest feasible position (or rejected), never revising actions whose
epoch already passed, and the mean rejection count over the pool comes back.
Because the simulation is a deterministic function of the revealed prefix,
scenarios sharing a prefix produce identical simulated action prefixes.

``qbar_trace`` is an object-level re-implementation of the same walk in plain
Python; it returns per-scenario working-plan snapshots for instrumentation
and doubles as a cross-check of the compiled kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

import numpy as np

from . import kernels
from .instances import Instance, Request
from .plan import (RoutePlan, VehicleState, Visit, compute_schedule,
                   depot_states, pack_routes)
from .scenarios import ScenarioPool

__all__ = [
    "EvalResult",
    "Evaluator",
    "qbar",
    "qbar_trace",
    "try_to_serve",
    "insertion_candidates",
    "InsertionResult",
]

EPS = kernels.EPS


@dataclass(frozen=True)
class EvalResult:
    """Mean rejections over the pool plus the per-scenario counts."""

    mean_rejections: float
    per_scenario: tuple[int, ...] = ()

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.mean_rejections)


class InsertionResult(NamedTuple):
    plan: RoutePlan
    vehicle: int
    slot: int
    added_cost: float


class Evaluator:
    """Reusable evaluation context for one instance (caches float views and
    scratch buffers so repeated calls do not reallocate)."""

    def __init__(self, instance: Instance):
        self.instance = instance
        self.ew = instance.tw_early.astype(np.float64)
        self.lw = instance.tw_late.astype(np.float64)
        self.dur = instance.service.astype(np.float64)
        self.dem = instance.demand
        self.depot_close = float(instance.tw_late[0])
        self._bufs: dict[tuple[int, int, int], dict[str, np.ndarray]] = {}
        self.calls = 0

    def _buffers(self, k: int, cap: int, nscen: int) -> dict[str, np.ndarray]:
        key = (k, cap, nscen)
        bufs = self._bufs.get(key)
        if bufs is None:
            bufs = {
                "wverts": np.zeros((k, cap), dtype=np.int64),
                "wreloc": np.zeros((k, cap), dtype=np.int64),
                "wminst": np.zeros((k, cap)),
                "wcwait": np.zeros((k, cap)),
                "lens": np.zeros(k, dtype=np.int64),
                "heads": np.zeros(k, dtype=np.int64),
                "closed": np.zeros(k, dtype=np.int64),
                "pos": np.zeros(k, dtype=np.int64),
                "free": np.zeros(k),
                "load": np.zeros(k),
                "rdep": np.zeros(k),
                "arr2": np.zeros((k, cap)),
                "sst2": np.zeros((k, cap)),
                "dep2": np.zeros((k, cap)),
                "dtw2": np.zeros((k, cap)),
                "tverts": np.zeros(cap, dtype=np.int64),
                "treloc": np.zeros(cap, dtype=np.int64),
                "tminst": np.zeros(cap),
                "tcwait": np.zeros(cap),
                "tlst": np.zeros(cap),
                "tarr": np.zeros(cap),
                "tsst": np.zeros(cap),
                "tdep": np.zeros(cap),
                "tdtw": np.zeros(cap),
                "out_rej": np.zeros(nscen, dtype=np.int64),
            }
            self._bufs[key] = bufs
        return bufs

    def qbar(self, plan: RoutePlan, pool: ScenarioPool,
             states: Iterable[VehicleState] | None = None,
             closed: Iterable[bool] | None = None,
             walk_start: int | None = None) -> EvalResult:
        """Mean rejections of the plan over the pool (+inf sentinel when the
        plan itself does not schedule)."""
        self.calls += 1
        inst = self.instance
        if states is None:
            states = depot_states(inst)
        if walk_start is None:
            walk_start = pool.start_epoch
        srev_v, srev_t, soff = pool.packed()
        max_rev = 0
        for s in range(pool.pool_size):
            max_rev = max(max_rev, int(soff[s + 1] - soff[s]))
        packed = pack_routes(plan, states, closed, slack=max_rev)
        k, cap = packed.verts.shape
        bufs = self._buffers(k, cap, pool.pool_size)
        code = kernels.STRATEGY_CODES[plan.strategy]
        status = kernels.simulate_pool(
            packed.verts, packed.reloc, packed.minstart, packed.cwait,
            packed.lens, packed.closed,
            packed.pos, packed.free, packed.load,
            float(plan.plan_start_epoch), int(walk_start),
            srev_v, srev_t, soff,
            inst.travel, self.ew, self.lw, self.dur, self.dem,
            inst.capacity, self.depot_close, code,
            bufs["wverts"], bufs["wreloc"], bufs["wminst"], bufs["wcwait"],
            bufs["lens"], bufs["heads"], bufs["closed"],
            bufs["pos"], bufs["free"], bufs["load"], bufs["rdep"],
            bufs["arr2"], bufs["sst2"], bufs["dep2"], bufs["dtw2"],
            bufs["tverts"], bufs["treloc"], bufs["tminst"], bufs["tcwait"],
            bufs["tlst"], bufs["tarr"], bufs["tsst"], bufs["tdep"], bufs["tdtw"],
            bufs["out_rej"])
        if status != 0:
            return EvalResult(mean_rejections=math.inf)
        per = tuple(int(x) for x in bufs["out_rej"])
        return EvalResult(mean_rejections=sum(per) / len(per), per_scenario=per)

    def insertion_candidates(self, vertex: int, min_epoch: float, plan: RoutePlan,
                             states: Iterable[VehicleState] | None = None,
                             closed: Iterable[bool] | None = None,
                             ready: float | None = None) -> list[tuple[int, int, float]]:
        """Feasible insertion slots for ``vertex`` as (vehicle, slot, added
        travel cost), in scan order (vehicle ascending, slot ascending)."""
        inst = self.instance
        if states is None:
            states = depot_states(inst)
        if ready is None:
            ready = max(float(plan.plan_start_epoch), min_epoch)
        packed = pack_routes(plan, states, closed, slack=1)
        k, cap = packed.verts.shape
        heads = np.zeros(k, dtype=np.int64)
        nslots = int(packed.lens.sum()) + k
        out_r = np.zeros(nslots, dtype=np.int64)
        out_slot = np.zeros(nslots, dtype=np.int64)
        out_cost = np.zeros(nslots)
        scratch = [np.zeros(cap, dtype=np.int64), np.zeros(cap, dtype=np.int64),
                   np.zeros(cap), np.zeros(cap), np.zeros(cap), np.zeros(cap),
                   np.zeros(cap), np.zeros(cap), np.zeros(cap)]
        code = kernels.STRATEGY_CODES[plan.strategy]
        cnt = kernels.collect_insertions(
            packed.verts, packed.reloc, packed.minstart, packed.cwait,
            packed.lens, heads, packed.closed,
            packed.pos, packed.free, packed.load,
            int(vertex), float(min_epoch), float(ready),
            inst.travel, self.ew, self.lw, self.dur, self.dem,
            inst.capacity, self.depot_close, code,
            *scratch, out_r, out_slot, out_cost)
        return [(int(out_r[i]), int(out_slot[i]), float(out_cost[i]))
                for i in range(cnt)]


def qbar(plan: RoutePlan, pool: ScenarioPool, instance: Instance,
         states: Iterable[VehicleState] | None = None,
         closed: Iterable[bool] | None = None,
         walk_start: int | None = None) -> EvalResult:
    """Functional wrapper around :meth:`Evaluator.qbar`."""
    return Evaluator(instance).qbar(plan, pool, states, closed, walk_start)


def try_to_serve(request: Request, plan: RoutePlan, instance: Instance,
                 states: Iterable[VehicleState] | None = None,
                 closed: Iterable[bool] | None = None,
                 evaluator: Evaluator | None = None) -> Optional[InsertionResult]:
    """Insert the request's vertex at the feasible position of minimum added
    travel time without reordering anything else; ties break to the lowest
    vehicle id, then the earliest position. None when no position fits."""
    ev = evaluator or Evaluator(instance)
    min_epoch = float(max(plan.plan_start_epoch, request.reveal_epoch))
    cands = ev.insertion_candidates(request.vertex, min_epoch, plan, states, closed)
    if not cands:
        return None
    # scan order already encodes the tie-break: first candidate within EPS of
    # the minimum is the (cost, vehicle, slot)-minimal one
    best_cost = min(c[2] for c in cands)
    best = next(c for c in cands if c[2] < best_cost + EPS)
    r, slot, cost = best
    routes = [list(route) for route in plan.routes]
    routes[r].insert(slot, Visit(vertex=request.vertex, request=request))
    return InsertionResult(plan=plan.with_routes(routes), vehicle=r, slot=slot,
                           added_cost=cost)


def insertion_candidates(request: Request, plan: RoutePlan, instance: Instance,
                         states: Iterable[VehicleState] | None = None,
                         closed: Iterable[bool] | None = None,
                         evaluator: Evaluator | None = None) -> list[tuple[int, int, float]]:
    ev = evaluator or Evaluator(instance)
    min_epoch = float(max(plan.plan_start_epoch, request.reveal_epoch))
    return ev.insertion_candidates(request.vertex, min_epoch, plan, states, closed)


# ---------------------------------------------------------------------------
# Instrumented pure-Python walk


def _route_schedule(route, state, ready, strategy, instance):
    probe = RoutePlan((tuple(route),), plan_start_epoch=1, strategy=strategy)
    return compute_schedule(probe, instance, states=(state,), ready=ready)


def qbar_trace(plan: RoutePlan, pool: ScenarioPool, instance: Instance,
               states: Iterable[VehicleState] | None = None,
               closed: Iterable[bool] | None = None,
               walk_start: int | None = None):
    """Pure-Python mirror of the scenario walk.

    Returns (EvalResult, traces); traces[s] is the list of
    (epoch, rejected_so_far, routes_snapshot) after each processed reveal
    epoch, where routes_snapshot is the remaining planned visits as
    ((vertex, min_epoch), ...) per vehicle plus the frozen history.
    """
    inst = instance
    if states is None:
        states = depot_states(inst)
    states = list(states)
    if walk_start is None:
        walk_start = pool.start_epoch
    closed0 = list(closed) if closed is not None else [False] * len(plan.routes)
    base = compute_schedule(plan, inst, states, ready=float(plan.plan_start_epoch))
    if not base.feasible:
        return EvalResult(mean_rejections=math.inf), []

    results = []
    traces = []
    for scen in pool.scenarios:
        routes = [list(r) for r in plan.routes]
        st = list(states)
        cl = list(closed0)
        ready = [float(plan.plan_start_epoch)] * len(routes)
        frozen: list[list[tuple[int, float]]] = [[] for _ in routes]
        rejected = 0
        trace = []
        by_epoch: dict[int, list[int]] = {}
        for v, t in scen.reveals:
            if t >= walk_start:
                by_epoch.setdefault(t, []).append(v)
        for te in sorted(by_epoch):
            tef = float(te)
            for r in range(len(routes)):
                while routes[r]:
                    sched = _route_schedule(routes[r], st[r], ready[r],
                                            plan.strategy, inst)
                    if sched.depart_toward[0][0] >= tef - EPS:
                        break
                    visit = routes[r][0]
                    if visit.is_relocation:
                        if sched.departure[0][0] >= tef - EPS:
                            # parked on the waypoint; visit stays planned
                            if st[r].vertex != visit.vertex:
                                st[r] = VehicleState(visit.vertex,
                                                     float(sched.arrival[0][0]),
                                                     st[r].load)
                            break
                        st[r] = VehicleState(visit.vertex,
                                             float(sched.departure[0][0]),
                                             st[r].load)
                    else:
                        st[r] = VehicleState(
                            visit.vertex,
                            float(sched.service_start[0][0]) + float(inst.service[visit.vertex]),
                            st[r].load + float(inst.demand[visit.vertex]))
                    routes[r].pop(0)
                    frozen[r].append((visit.vertex, st[r].free))
                if not routes[r] and not cl[r] and st[r].vertex != 0:
                    sched = _route_schedule([], st[r], ready[r], plan.strategy, inst)
                    if sched.return_depart[0] < tef - EPS:
                        cl[r] = True
                        st[r] = VehicleState(0, float(sched.return_arrive[0]), st[r].load)
            for jv in sorted(by_epoch[te]):
                best = None
                for r in range(len(routes)):
                    if cl[r]:
                        continue
                    for slot in range(len(routes[r]) + 1):
                        trial = list(routes[r])
                        req = Request(vertex=jv, reveal_epoch=te, arrival_index=0)
                        trial.insert(slot, Visit(vertex=jv, request=req))
                        sched = _route_schedule(trial, st[r], tef, plan.strategy, inst)
                        if not sched.feasible:
                            continue
                        prev = st[r].vertex if slot == 0 else routes[r][slot - 1].vertex
                        nxt = 0 if slot == len(routes[r]) else routes[r][slot].vertex
                        cost = (inst.travel[prev, jv] + inst.travel[jv, nxt]
                                - inst.travel[prev, nxt])
                        if best is None or cost < best[0] - EPS:
                            best = (cost, r, slot, req)
                if best is None:
                    rejected += 1
                else:
                    _, r, slot, req = best
                    routes[r].insert(slot, Visit(vertex=jv, request=req))
                    ready[r] = tef
            snapshot = tuple(
                tuple((v.vertex, float(v.request.reveal_epoch) if v.request else 0.0)
                      for v in routes[r])
                for r in range(len(routes)))
            frozen_snap = tuple(tuple(f) for f in frozen)
            trace.append((te, rejected, snapshot, frozen_snap))
        results.append(rejected)
        traces.append(trace)
    mean = sum(results) / len(results) if results else 0.0
    return EvalResult(mean_rejections=mean, per_scenario=tuple(results)), traces
