"""The online decision loop: request handling, execution, plan improvement.

One run replays an instance's realized reveal stream over epochs 1..H. At
each epoch the controller decides accept/reject for the new requests (the
decision rule restricted to modifications of the current plan), executes the
epoch's committed actions, reconciles the scenario pool with reality, then
spends the remainder of the epoch hill-climbing the future plan, resampling
the pool every ``resample_period`` iterations.

Clocking: under ``clock_mode="logical"`` every budget counts evaluator
invocations, so seeded runs replay byte-for-byte; ``"wallclock"`` budgets are
seconds. Randomness comes from two child streams of the run seed, consumed in
a fixed order: the scenario stream feeds pool init/update/resample (and the
per-epoch pools of the expectation rule), the search stream feeds shake
target draws, insertion-fallback shakes, and annealing acceptance.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .evaluation import Evaluator
from .instances import Instance, Request
from .oracle import OracleGuard, OracleState, exact_multistage_value
from .plan import (DecisionLog, EpochRecord, RoutePlan, VehicleState, Visit,
                   compute_schedule, depot_states, total_travel_cost)
from .scenarios import ScenarioPool, new_pool, resample_pool, update_pool
from .search import AnnealingState, OperatorRotor, anneal_accept, shake_solution

__all__ = [
    "ControllerConfig",
    "EpochEvent",
    "RunReport",
    "run_online",
    "run_gls",
    "handle_requests",
    "choose_request_expectation",
    "ALGORITHM_IDS",
]

DECISION_RULES = ("GSA", "GLS", "Expectation")


@dataclass(frozen=True)
class ControllerConfig:
    """Run parameters; logical budgets count evaluator invocations."""

    pool_size: int = 30
    resample_period: int = 30
    insertion_budget: int = 12
    offline_budget: int = 200
    per_epoch_budget: int = 200
    strategy: str = "DF"
    relocation_enabled: bool = False
    decision_rule: str = "GSA"
    seed: int = 0
    clock_mode: str = "logical"
    offline_seconds: float = 10.0
    epoch_seconds: float = 0.5
    anneal_temperature: float = 10.0
    anneal_cooling: float = 0.999

    def __post_init__(self):
        if self.decision_rule not in DECISION_RULES:
            raise ValueError(f"unknown decision rule {self.decision_rule!r}")
        if self.clock_mode not in ("logical", "wallclock"):
            raise ValueError(f"unknown clock mode {self.clock_mode!r}")
        for name in ("pool_size", "resample_period", "insertion_budget",
                     "offline_budget", "per_epoch_budget"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")

    def algorithm_id(self) -> str:
        if self.decision_rule == "GLS":
            return "GLS-" + self.strategy.lower()
        if self.decision_rule == "Expectation":
            return "EXP"
        tag = self.strategy.lower()
        if self.relocation_enabled and self.strategy == "DF":
            tag += "r"
        return "GSA-" + tag

    @staticmethod
    def for_algorithm(algorithm_id: str, **overrides) -> "ControllerConfig":
        table = {
            "GSA-df": dict(decision_rule="GSA", strategy="DF", relocation_enabled=False),
            "GSA-dfr": dict(decision_rule="GSA", strategy="DF", relocation_enabled=True),
            "GSA-ro": dict(decision_rule="GSA", strategy="RO", relocation_enabled=True),
            "GSA-wf": dict(decision_rule="GSA", strategy="WF", relocation_enabled=False),
            "GSA-cw": dict(decision_rule="GSA", strategy="CW", relocation_enabled=False),
            "GLS-df": dict(decision_rule="GLS", strategy="DF", relocation_enabled=False),
            "EXP": dict(decision_rule="Expectation", strategy="DF", relocation_enabled=False),
        }
        if algorithm_id not in table:
            raise ValueError(f"unknown algorithm id {algorithm_id!r}")
        kw = dict(table[algorithm_id])
        kw.update(overrides)
        return ControllerConfig(**kw)


ALGORITHM_IDS = ("GSA-df", "GSA-dfr", "GSA-ro", "GLS-df", "EXP")


@dataclass(frozen=True)
class EpochEvent:
    epoch: int
    revealed: tuple[Request, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(self.revealed, key=lambda r: r.arrival_index))
        object.__setattr__(self, "revealed", ordered)


@dataclass(frozen=True)
class RunReport:
    """Per-run results feeding aggregation tables and profiles."""

    instance_id: str
    algorithm_id: str
    seed: int
    rejections: int
    accepted_count: int
    iterations_mean: float
    iterations_min: int
    iterations_max: int
    evaluator_calls: int
    final_travel_cost: float
    events: tuple[dict, ...] = ()
    event_log_path: str = ""

    @property
    def total_requests(self) -> int:
        return self.rejections + self.accepted_count


class _Clock:
    """Per-phase budget: evaluator invocations (logical) or seconds."""

    def __init__(self, mode: str, run: "_OnlineRun", limit_calls: int,
                 limit_seconds: float):
        self.mode = mode
        self.run = run
        self.limit_calls = limit_calls
        self.deadline = time.monotonic() + limit_seconds
        self.start_calls = run.evals

    def expired(self) -> bool:
        if self.mode == "logical":
            return self.run.evals - self.start_calls >= self.limit_calls
        return time.monotonic() >= self.deadline


class _OnlineRun:
    def __init__(self, instance: Instance, config: ControllerConfig,
                 instrumentation: Optional[Callable[[dict], None]] = None):
        self.instance = instance
        self.config = config
        self.instrument = instrumentation
        root = np.random.default_rng(config.seed)
        self.scenario_rng, self.search_rng = root.spawn(2)
        self.evaluator = Evaluator(instance)
        self.states: list[VehicleState] = list(depot_states(instance))
        self.closed: list[bool] = [False] * instance.vehicle_count
        self.plan = RoutePlan.empty(instance.vehicle_count, plan_start_epoch=1,
                                    strategy=config.strategy,
                                    relocation_enabled=config.relocation_enabled)
        self.rotor = OperatorRotor.for_plan(self.plan)
        self.log = DecisionLog()
        self.pool: Optional[ScenarioPool] = None
        self.anneal = AnnealingState(config.anneal_temperature,
                                     config.anneal_cooling, self.search_rng)
        self.evals = 0
        self.events: list[dict] = []
        self.iterations_per_epoch: list[int] = []
        self.incumbent_value: float = math.nan
        self.traveled = 0.0
        self.served: dict[str, float] = {}

    # -- helpers -----------------------------------------------------------

    def _emit(self, kind: str, **payload):
        if self.instrument is not None:
            payload["kind"] = kind
            self.instrument(payload)

    def _qbar(self, plan: RoutePlan, walk_start: int) -> float:
        res = self.evaluator.qbar(plan, self.pool, self.states, self.closed,
                                  walk_start=walk_start)
        self.evals += 1
        return res.mean_rejections

    def _travel_cost(self, plan: RoutePlan) -> float:
        self.evals += 1
        sched = compute_schedule(plan, self.instance, self.states,
                                 ready=float(plan.plan_start_epoch))
        if not sched.feasible:
            return math.inf
        return total_travel_cost(plan, self.instance, self.states)

    def _plan_feasible(self, plan: RoutePlan) -> bool:
        return compute_schedule(plan, self.instance, self.states,
                                ready=float(plan.plan_start_epoch)).feasible

    # -- offline phase -----------------------------------------------------

    def offline(self) -> tuple[list, list]:
        det = sorted(self.instance.deterministic_requests,
                     key=lambda r: r.arrival_index)
        accepted, rejected = [], []
        for req in det:
            res = self._cheapest_insertion(req, self.plan, ready=1.0)
            if res is None:
                rejected.append(req)
            else:
                self.plan, veh = res
                accepted.append((req, veh))
        skip = (not det and not self.config.relocation_enabled)
        if self.config.decision_rule in ("GSA", "Expectation"):
            self.pool = new_pool(self.instance, self.config.pool_size,
                                 self.config.resample_period, 1, self.scenario_rng)
        if self.config.decision_rule == "GSA" and not skip:
            clock = _Clock(self.config.clock_mode, self,
                           self.config.offline_budget, self.config.offline_seconds)
            self._improve(epoch=0, clock=clock)
        elif self.config.decision_rule == "GLS" and det:
            clock = _Clock(self.config.clock_mode, self,
                           self.config.offline_budget, self.config.offline_seconds)
            self._improve_gls(clock=clock)
        return accepted, rejected

    def _cheapest_insertion(self, req: Request, plan: RoutePlan, ready: float):
        min_epoch = float(max(req.reveal_epoch, plan.plan_start_epoch))
        cands = self.evaluator.insertion_candidates(
            req.vertex, min_epoch, plan, self.states, self.closed,
            ready=max(ready, min_epoch))
        if not cands:
            return None
        best_cost = min(c[2] for c in cands)
        r, slot, _ = next(c for c in cands if c[2] < best_cost + 1e-9)
        routes = [list(route) for route in plan.routes]
        routes[r].insert(slot, Visit(vertex=req.vertex, request=req))
        return plan.with_routes(routes), r

    # -- request handling --------------------------------------------------

    def handle_requests(self, event: EpochEvent):
        """Process the epoch's reveals sequentially in arrival order; returns
        (accepted(request, vehicle) list, rejected list). The plan is updated
        in place to the post-decision b^{t..H}."""
        t = event.epoch
        plan = self.plan.advanced_to(t)
        accepted, rejected = [], []
        rule = self.config.decision_rule
        for req in event.revealed:
            outcome = None
            if rule == "GSA" or rule == "Expectation":
                outcome = self._insert_by_value(req, plan, t)
            else:
                res = self._cheapest_insertion(req, plan, ready=float(t))
                self.evals += 1
                if res is None:
                    res = self._fallback_insertion(req, plan, t)
                outcome = res
            if outcome is None:
                rejected.append(req)
            else:
                plan, veh = outcome
                accepted.append((req, veh))
        self.plan = plan
        return accepted, rejected

    def _insert_by_value(self, req: Request, plan: RoutePlan, t: int):
        """GSA rule: among feasible insertion candidates found within the
        insertion budget, adopt the one minimizing the scenario-averaged
        rejection estimate."""
        budget = self.config.insertion_budget
        min_epoch = float(max(t, req.reveal_epoch))
        cands = self.evaluator.insertion_candidates(
            req.vertex, min_epoch, plan, self.states, self.closed,
            ready=min_epoch)
        cands.sort(key=lambda c: c[2])  # stable: ties keep (vehicle, slot) order
        if not cands:
            return self._fallback_insertion(req, plan, t)
        best = None
        for r, slot, cost in cands[:budget]:
            routes = [list(route) for route in plan.routes]
            routes[r].insert(slot, Visit(vertex=req.vertex, request=req))
            cand_plan = plan.with_routes(routes)
            val = self._qbar(cand_plan, walk_start=t + 1)
            if best is None or val < best[0]:
                best = (val, cand_plan, r)
        return best[1], best[2]

    def _fallback_insertion(self, req: Request, plan: RoutePlan, t: int):
        """No direct position fits: shake the suffix up to the insertion
        budget and retry, adopting the first feasible serving modification."""
        rotor = self.rotor
        for _ in range(self.config.insertion_budget):
            shaken, rotor, _op = shake_solution(plan, rotor, self.search_rng,
                                                self.instance)
            self.evals += 1
            if not self._plan_feasible(shaken):
                continue
            res = self._cheapest_insertion(req, shaken, ready=float(t))
            if res is not None:
                self.rotor = rotor
                return res
        self.rotor = rotor
        return None

    def _expectation_pool(self, t: int):
        self.pool = resample_pool(self.pool, self.instance, min(t, self.instance.horizon - 1))

    # -- execution ---------------------------------------------------------

    def execute_epoch(self, t: int) -> list[str]:
        """Commit everything the schedule starts during [t, t+1): departures
        toward visits (which freezes them), services, and depot returns."""
        ops: list[str] = []
        cutoff = float(t + 1) - 1e-9
        sched = compute_schedule(self.plan, self.instance, self.states,
                                 ready=float(t))
        if not sched.feasible:
            raise RuntimeError("committed plan became infeasible; controller bug")
        routes = [list(r) for r in self.plan.routes]
        for r in range(len(routes)):
            idx = 0
            while idx < len(routes[r]) and sched.depart_toward[r][idx] < cutoff:
                visit = routes[r][idx]
                arr = float(sched.arrival[r][idx])
                if visit.is_relocation and sched.departure[r][idx] >= cutoff:
                    # arrival commits, departure is still open: park on the
                    # waypoint and keep the visit planned so the linger (and
                    # any diversion) stays a future decision
                    if self.states[r].vertex != visit.vertex:
                        self.traveled += float(
                            self.instance.travel[self.states[r].vertex, visit.vertex])
                        self.states[r] = VehicleState(visit.vertex, arr,
                                                      self.states[r].load)
                        ops.append(f"v{r} reloc {visit.vertex} arr={arr:.4f} parked")
                    break
                self.traveled += float(self.instance.travel[self.states[r].vertex,
                                                            visit.vertex])
                if visit.is_relocation:
                    dep = float(sched.departure[r][idx])
                    self.states[r] = VehicleState(visit.vertex, dep,
                                                  self.states[r].load)
                    ops.append(f"v{r} reloc {visit.vertex} arr={arr:.4f} "
                               f"depart={dep:.4f}")
                else:
                    start = float(sched.service_start[r][idx])
                    end = start + float(self.instance.service[visit.vertex])
                    load = self.states[r].load + float(self.instance.demand[visit.vertex])
                    self.states[r] = VehicleState(visit.vertex, end, load)
                    key = visit.request.key() if visit.request else str(visit.vertex)
                    ops.append(f"v{r} serve {key} arr={arr:.4f} "
                               f"start={start:.4f} load={load:.1f}")
                    self.served[key] = start
                idx += 1
            remaining = routes[r][idx:]
            if (not remaining and not self.closed[r] and self.states[r].vertex != 0
                    and sched.return_depart[r] < cutoff):
                self.closed[r] = True
                self.traveled += float(self.instance.travel[self.states[r].vertex, 0])
                ops.append(f"v{r} return depart={sched.return_depart[r]:.4f} "
                           f"arrive={sched.return_arrive[r]:.4f}")
                self.states[r] = VehicleState(0, float(sched.return_arrive[r]),
                                              self.states[r].load)
            routes[r] = remaining
        self.plan = self.plan.with_routes(routes).advanced_to(t + 1)
        return ops

    # -- improvement -------------------------------------------------------

    def _improve(self, epoch: int, clock: _Clock):
        """GSA hill-climb: shake, evaluate, adopt strict improvements;
        resample the pool every resample_period iterations."""
        walk = epoch + 1
        self.incumbent_value = self._qbar(self.plan, walk_start=walk)
        self._emit("baseline", epoch=epoch, value=self.incumbent_value)
        iters = 0
        while not clock.expired():
            cand, self.rotor, op = shake_solution(self.plan, self.rotor,
                                                  self.search_rng, self.instance)
            val = self._qbar(cand, walk_start=walk)
            iters += 1
            self.pool.iterations_since_resample += 1
            if val < self.incumbent_value:
                self.plan = cand
                self.incumbent_value = val
            self._emit("improve", epoch=epoch, iteration=iters, op=op,
                       value=self.incumbent_value)
            if self.pool.iterations_since_resample >= self.config.resample_period:
                self.pool = resample_pool(self.pool, self.instance, epoch)
                if not clock.expired():
                    self.incumbent_value = self._qbar(self.plan, walk_start=walk)
                self._emit("resample", epoch=epoch, value=self.incumbent_value)
        return iters

    def _improve_gls(self, clock: _Clock):
        cost = self._travel_cost(self.plan)
        iters = 0
        while not clock.expired():
            cand, self.rotor, op = shake_solution(self.plan, self.rotor,
                                                  self.search_rng, self.instance)
            cand_cost = self._travel_cost(cand)
            iters += 1
            ok, self.anneal = anneal_accept(cost, cand_cost, self.anneal)
            if ok and math.isfinite(cand_cost):
                self.plan = cand
                cost = cand_cost
        return iters

    # -- main loop ---------------------------------------------------------

    def run(self) -> tuple[DecisionLog, RunReport]:
        inst = self.instance
        cfg = self.config
        acc0, rej0 = self.offline()
        self.log.append(EpochRecord(epoch=0, accepted=tuple(acc0),
                                    rejected=tuple(rej0), ops=()))
        by_epoch = {}
        for req in inst.dynamic_requests:
            by_epoch.setdefault(req.reveal_epoch, []).append(req)
        for t in range(1, inst.horizon + 1):
            event = EpochEvent(epoch=t, revealed=tuple(by_epoch.get(t, ())))
            if cfg.decision_rule == "Expectation" and self.pool is not None:
                self._expectation_pool(t)
            accepted, rejected = self.handle_requests(event)
            ops = self.execute_epoch(t)
            if cfg.decision_rule == "GSA" and self.pool is not None:
                self.pool = update_pool(self.pool, event.revealed, t, inst)
            iters = 0
            if cfg.decision_rule == "GSA":
                clock = _Clock(cfg.clock_mode, self, cfg.per_epoch_budget,
                               cfg.epoch_seconds)
                iters = self._improve(epoch=t, clock=clock)
            elif cfg.decision_rule == "GLS":
                clock = _Clock(cfg.clock_mode, self, cfg.per_epoch_budget,
                               cfg.epoch_seconds)
                iters = self._improve_gls(clock=clock)
            self.iterations_per_epoch.append(iters)
            self.log.append(EpochRecord(
                epoch=t, accepted=tuple(accepted), rejected=tuple(rejected),
                ops=tuple(ops)))
            self.events.append({
                "epoch": t,
                "revealed": [r.key() for r in event.revealed],
                "accepted": [r.key() for r, _v in accepted],
                "rejected": [r.key() for r in rejected],
                "incumbent": None if math.isnan(self.incumbent_value)
                             else self.incumbent_value,
                "iterations": iters,
            })
        self._final_audit()
        iters = self.iterations_per_epoch or [0]
        report = RunReport(
            instance_id=inst.name or "instance",
            algorithm_id=cfg.algorithm_id(),
            seed=cfg.seed,
            rejections=self.log.rejected_count,
            accepted_count=self.log.accepted_count,
            iterations_mean=sum(iters) / len(iters),
            iterations_min=min(iters),
            iterations_max=max(iters),
            evaluator_calls=self.evals,
            final_travel_cost=self._final_travel_cost(),
            events=tuple(self.events),
        )
        return self.log, report

    def _final_travel_cost(self) -> float:
        return self.traveled

    def _final_audit(self):
        if self.plan.visit_count != 0:
            raise RuntimeError("plan visits left unexecuted at the horizon end")
        for r, st in enumerate(self.states):
            if st.vertex != 0:
                raise RuntimeError(f"vehicle {r} did not return to the depot")
            if st.free > float(self.instance.tw_late[0]) + 1e-6:
                raise RuntimeError(f"vehicle {r} returned after the depot closed")
        self.log.validate_unique_decisions(self.instance.all_requests)
        # every accepted request must appear as served, inside its window
        by_key = {req.key(): req for req in self.instance.all_requests}
        for rec in self.log.records:
            for req, _veh in rec.accepted:
                start = self.served.get(req.key())
                if start is None:
                    raise RuntimeError(f"accepted request {req.key()} never served")
                lo = max(float(self.instance.tw_early[req.vertex]),
                         float(req.reveal_epoch))
                hi = float(self.instance.tw_late[req.vertex])
                if not lo - 1e-6 <= start <= hi + 1e-6:
                    raise RuntimeError(
                        f"request {req.key()} served at {start} outside [{lo},{hi}]")
        assert set(self.served) <= set(by_key)


def run_online(instance: Instance, config: ControllerConfig,
               instrumentation: Optional[Callable[[dict], None]] = None
               ) -> tuple[DecisionLog, RunReport]:
    """Full online run under the configured decision rule."""
    return _OnlineRun(instance, config, instrumentation).run()


def run_gls(instance: Instance, config: ControllerConfig | None = None,
            **overrides) -> tuple[DecisionLog, RunReport]:
    """Travel-cost local search baseline with annealing acceptance."""
    if config is None:
        config = ControllerConfig(decision_rule="GLS", **overrides)
    elif config.decision_rule != "GLS":
        config = replace(config, decision_rule="GLS")
    return run_online(instance, config)


def handle_requests(instance: Instance, config: ControllerConfig,
                    plan: RoutePlan, states, closed, pool, event: EpochEvent,
                    rotor: OperatorRotor | None = None,
                    search_rng: np.random.Generator | None = None):
    """Standalone request-handling step (the per-epoch decision without the
    surrounding loop): returns (accepted, rejected, updated plan)."""
    run = _OnlineRun(instance, config)
    run.plan = plan
    run.states = list(states)
    run.closed = list(closed)
    run.pool = pool
    if rotor is not None:
        run.rotor = rotor
    if search_rng is not None:
        run.search_rng = search_rng
    accepted, rejected = run.handle_requests(event)
    return accepted, rejected, run.plan


def choose_request_expectation(instance: Instance, candidates, scenarios,
                               probs=None, state: OracleState | None = None,
                               guard: OracleGuard | None = None,
                               budget: int = 256):
    """Expectation ranking over explicit candidate actions: each candidate is
    scored by the summed cost of an (exact) per-scenario solution starting
    with it; scenarios are optimized independently, so the ranking carries
    the two-stage relaxation's optimism. Returns (best_label, scores dict);
    ties break to the lowest serialization order of the label.

    The candidate x scenario product is truncated (with a logged warning)
    when it exceeds ``budget`` pairs.
    """
    pairs = len(candidates) * len(scenarios)
    cand_list = list(candidates)
    if pairs > budget:
        keep = max(1, budget // max(1, len(scenarios)))
        logging.getLogger(__name__).warning(
            "expectation candidate set truncated from %d to %d", len(cand_list), keep)
        cand_list = cand_list[:keep]
    scen = list(scenarios)
    if probs is None:
        probs = [1.0 / len(scen)] * len(scen)
    scores = {}
    for label, action in cand_list:
        total = 0.0
        for s, p in zip(scen, probs):
            total += p * exact_multistage_value(instance, [s], [1.0], state=state,
                                                candidate=action, guard=guard)
        scores[label] = total
    best = min(scores, key=lambda lbl: (scores[lbl], str(lbl)))
    return best, scores
