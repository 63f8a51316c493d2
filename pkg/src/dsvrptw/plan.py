"""Route plans over the discrete horizon, schedules, and the objective.

A :class:`RoutePlan` holds the planned future actions: per vehicle an ordered
list of visits (service visits referencing their request, or relocation
waypoints) starting from ``plan_start_epoch``. Scheduling under the four
waiting strategies happens in :mod:`dsvrptw.kernels`; this module packs plans
into arrays, wraps results in :class:`Schedule`, and provides the objective
(rejection count, +inf sentinel for infeasible commitments).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

import numpy as np

from . import kernels
from .instances import Instance, Request

__all__ = [
    "SERVICE",
    "RELOCATION",
    "Visit",
    "RoutePlan",
    "VehicleState",
    "Schedule",
    "DecisionLog",
    "EpochRecord",
    "PackedRoutes",
    "pack_routes",
    "compute_schedule",
    "objective_omega",
    "total_travel_cost",
    "validate_schedule",
    "depot_states",
]

SERVICE = "service"
RELOCATION = "relocation"


@dataclass(frozen=True)
class Visit:
    """One planned stop. Relocation waypoints carry no request, demand or
    duration; ``custom_wait`` only matters under the custom-wait strategy."""

    vertex: int
    kind: str = SERVICE
    request: Optional[Request] = None
    custom_wait: int = 0

    def __post_init__(self):
        if self.kind not in (SERVICE, RELOCATION):
            raise ValueError(f"unknown visit kind {self.kind!r}")
        if self.kind == RELOCATION and self.request is not None:
            raise ValueError("relocation visits carry no request")
        if self.custom_wait < 0:
            raise ValueError("custom_wait must be nonnegative")

    @property
    def is_relocation(self) -> bool:
        return self.kind == RELOCATION

    def label(self) -> str:
        if self.is_relocation:
            return f"reloc:{self.vertex}"
        req = self.request
        tag = req.key() if req is not None else str(self.vertex)
        w = f"+w{self.custom_wait}" if self.custom_wait else ""
        return f"serve:{tag}{w}"


@dataclass(frozen=True)
class RoutePlan:
    """Planned future route actions for every vehicle from ``plan_start_epoch``."""

    routes: tuple[tuple[Visit, ...], ...]
    plan_start_epoch: int
    strategy: str = "DF"
    relocation_enabled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "routes", tuple(tuple(r) for r in self.routes))
        if self.strategy not in kernels.STRATEGY_CODES:
            raise ValueError(f"unknown strategy {self.strategy!r}")

    @property
    def vehicle_count(self) -> int:
        return len(self.routes)

    @property
    def visit_count(self) -> int:
        return sum(len(r) for r in self.routes)

    def with_routes(self, routes) -> "RoutePlan":
        return RoutePlan(tuple(tuple(r) for r in routes), self.plan_start_epoch,
                         self.strategy, self.relocation_enabled)

    def advanced_to(self, epoch: int) -> "RoutePlan":
        return RoutePlan(self.routes, epoch, self.strategy, self.relocation_enabled)

    def service_requests(self) -> list[Request]:
        return [v.request for r in self.routes for v in r if not v.is_relocation]

    def dump(self) -> str:
        lines = []
        for i, route in enumerate(self.routes):
            body = " ".join(v.label() for v in route)
            lines.append(f"vehicle {i}: {body}".rstrip())
        return "\n".join(lines) + "\n"

    @staticmethod
    def empty(vehicle_count: int, plan_start_epoch: int = 1, strategy: str = "DF",
              relocation_enabled: bool = False) -> "RoutePlan":
        return RoutePlan(tuple(() for _ in range(vehicle_count)),
                         plan_start_epoch, strategy, relocation_enabled)


class VehicleState(NamedTuple):
    """Committed vehicle situation: vertex it is at (or bound for), the time
    it is free to act there, and the load picked up so far."""

    vertex: int
    free: float
    load: float


def depot_states(instance: Instance) -> tuple[VehicleState, ...]:
    start = float(instance.tw_early[0])
    return tuple(VehicleState(0, start, 0.0) for _ in range(instance.vehicle_count))


@dataclass
class PackedRoutes:
    """Array mirror of a plan's routes for the kernels."""

    verts: np.ndarray      # (k, cap) int64
    reloc: np.ndarray      # (k, cap) int64
    minstart: np.ndarray   # (k, cap) float64
    cwait: np.ndarray      # (k, cap) float64
    lens: np.ndarray       # (k,) int64
    closed: np.ndarray     # (k,) int64
    pos: np.ndarray        # (k,) int64
    free: np.ndarray       # (k,) float64
    load: np.ndarray       # (k,) float64


def pack_routes(plan: RoutePlan, states: Iterable[VehicleState],
                closed: Iterable[bool] | None = None, slack: int = 0) -> PackedRoutes:
    states = list(states)
    k = len(plan.routes)
    if len(states) != k:
        raise ValueError("one state per vehicle required")
    cap = max((len(r) for r in plan.routes), default=0) + max(0, slack) + 1
    verts = np.zeros((k, cap), dtype=np.int64)
    reloc = np.zeros((k, cap), dtype=np.int64)
    minstart = np.zeros((k, cap), dtype=np.float64)
    cwait = np.zeros((k, cap), dtype=np.float64)
    lens = np.zeros(k, dtype=np.int64)
    for r, route in enumerate(plan.routes):
        lens[r] = len(route)
        for i, visit in enumerate(route):
            verts[r, i] = visit.vertex
            if visit.is_relocation:
                reloc[r, i] = 1
            elif visit.request is not None:
                minstart[r, i] = float(visit.request.reveal_epoch)
            cwait[r, i] = float(visit.custom_wait)
    closed_arr = np.zeros(k, dtype=np.int64)
    if closed is not None:
        for r, flag in enumerate(closed):
            closed_arr[r] = 1 if flag else 0
    return PackedRoutes(
        verts=verts, reloc=reloc, minstart=minstart, cwait=cwait, lens=lens,
        closed=closed_arr,
        pos=np.array([s.vertex for s in states], dtype=np.int64),
        free=np.array([s.free for s in states], dtype=np.float64),
        load=np.array([s.load for s in states], dtype=np.float64),
    )


@dataclass
class Schedule:
    """Per-vehicle visit timings. ``feasible`` is a value, not an error: an
    infeasible plan simply fails some window, capacity or horizon bound."""

    feasible: bool
    arrival: tuple[np.ndarray, ...]
    service_start: tuple[np.ndarray, ...]
    departure: tuple[np.ndarray, ...]
    depart_toward: tuple[np.ndarray, ...]
    return_depart: tuple[float, ...]
    return_arrive: tuple[float, ...]
    load_end: tuple[float, ...]


def compute_schedule(plan: RoutePlan, instance: Instance,
                     states: Iterable[VehicleState] | None = None,
                     ready: float | None = None) -> Schedule:
    """Schedule every route under the plan's waiting strategy.

    ``states`` defaults to idle-at-depot; ``ready`` floors planned departures
    and defaults to the plan's start epoch.
    """
    if states is None:
        states = depot_states(instance)
    if ready is None:
        ready = float(plan.plan_start_epoch)
    packed = pack_routes(plan, states)
    code = kernels.STRATEGY_CODES[plan.strategy]
    cap = packed.verts.shape[1]
    lst = np.zeros(cap)
    arrs, ssts, deps, dtws = [], [], [], []
    rdep, rarr, lend = [], [], []
    feasible = True
    for r in range(len(plan.routes)):
        n = int(packed.lens[r])
        arr = np.zeros(n)
        sst = np.zeros(n)
        dep = np.zeros(n)
        dtw = np.zeros(n)
        ok, rd, ra, ld = kernels.schedule_route(
            packed.verts[r], packed.reloc[r], packed.minstart[r], packed.cwait[r],
            n, packed.pos[r], packed.free[r], packed.load[r], ready,
            instance.travel, instance.tw_early.astype(np.float64),
            instance.tw_late.astype(np.float64), instance.service.astype(np.float64),
            instance.demand, instance.capacity, float(instance.tw_late[0]), code,
            lst, arr, sst, dep, dtw)
        feasible = feasible and bool(ok)
        arrs.append(arr)
        ssts.append(sst)
        deps.append(dep)
        dtws.append(dtw)
        rdep.append(float(rd))
        rarr.append(float(ra))
        lend.append(float(ld))
    return Schedule(
        feasible=feasible,
        arrival=tuple(arrs), service_start=tuple(ssts), departure=tuple(deps),
        depart_toward=tuple(dtws), return_depart=tuple(rdep),
        return_arrive=tuple(rarr), load_end=tuple(lend),
    )


# ---------------------------------------------------------------------------
# Decision log and objective


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    accepted: tuple[tuple[Request, int], ...] = ()   # (request, vehicle)
    rejected: tuple[Request, ...] = ()
    ops: tuple[str, ...] = ()                        # canonical per-vehicle actions


@dataclass
class DecisionLog:
    """Committed actions a^{0..t}: accept/reject outcomes plus the executed
    operational decisions, appended epoch by epoch and never revised."""

    records: list[EpochRecord] = field(default_factory=list)

    @property
    def rejected_count(self) -> int:
        return sum(len(rec.rejected) for rec in self.records)

    @property
    def accepted_count(self) -> int:
        return sum(len(rec.accepted) for rec in self.records)

    @property
    def epoch(self) -> int:
        return self.records[-1].epoch if self.records else 0

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError("epochs must be appended in increasing order")
        self.records.append(record)

    def decisions(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for rec in self.records:
            for req, veh in rec.accepted:
                out[req.key()] = f"accept v{veh}"
            for req in rec.rejected:
                out[req.key()] = "reject"
        return out

    def validate_unique_decisions(self, requests: Iterable[Request]) -> None:
        seen = self.decisions()
        keys = [r.key() for r in requests]
        missing = [k for k in keys if k not in seen]
        if missing:
            raise ValueError(f"requests without a decision: {missing}")
        if len(seen) != len(keys):
            extra = set(seen) - set(keys)
            raise ValueError(f"decisions for unknown requests: {sorted(extra)}")

    def to_text(self) -> str:
        lines = []
        for rec in self.records:
            lines.append(f"epoch {rec.epoch}")
            for req, veh in rec.accepted:
                lines.append(f"  accept {req.key()} -> v{veh}")
            for req in rec.rejected:
                lines.append(f"  reject {req.key()}")
            for op in rec.ops:
                lines.append(f"  {op}")
        lines.append(f"rejected {self.rejected_count}")
        return "\n".join(lines) + "\n"


def objective_omega(log: DecisionLog, feasible: bool) -> float:
    """+inf sentinel when the committed actions violate a constraint,
    otherwise the number of rejected requests."""
    if not feasible:
        return math.inf
    return float(log.rejected_count)


def total_travel_cost(plan: RoutePlan, instance: Instance,
                      states: Iterable[VehicleState] | None = None) -> float:
    """Sum of travel legs including the depot legs (empty routes cost 0)."""
    if states is None:
        states = depot_states(instance)
    total = 0.0
    for state, route in zip(states, plan.routes):
        if not route and state.vertex == 0:
            continue
        cur = state.vertex
        for visit in route:
            total += instance.travel[cur, visit.vertex]
            cur = visit.vertex
        total += instance.travel[cur, 0]
    return total


def validate_schedule(plan: RoutePlan, instance: Instance, schedule: Schedule,
                      states: Iterable[VehicleState] | None = None) -> list[str]:
    """Independent invariant check of a feasible schedule; returns violations.

    Re-derives nothing from the kernels: checks window membership, service
    spacing, travel-time consistency, capacity and horizon bounds directly
    against the schedule numbers.
    """
    if states is None:
        states = depot_states(instance)
    problems = []
    depot_close = float(instance.tw_late[0])
    for r, (state, route) in enumerate(zip(states, plan.routes)):
        load = state.load
        cur = state.vertex
        t = state.free
        for i, visit in enumerate(route):
            a = schedule.arrival[r][i]
            s = schedule.service_start[r][i]
            d = schedule.departure[r][i]
            if a + EPS_V < t + instance.travel[cur, visit.vertex]:
                problems.append(f"v{r} visit {i}: arrival precedes travel")
            if s + EPS_V < a:
                problems.append(f"v{r} visit {i}: service before arrival")
            if not visit.is_relocation:
                v = visit.vertex
                if s < instance.tw_early[v] - EPS_V or s > instance.tw_late[v] + EPS_V:
                    problems.append(f"v{r} visit {i}: window violated")
                if visit.request is not None and s + EPS_V < visit.request.reveal_epoch:
                    problems.append(f"v{r} visit {i}: service before reveal")
                if d + EPS_V < s + instance.service[v]:
                    problems.append(f"v{r} visit {i}: departure inside service")
                load += instance.demand[v]
                if load > instance.capacity + EPS_V:
                    problems.append(f"v{r} visit {i}: capacity exceeded")
            t = d
            cur = visit.vertex
        if route or cur != 0:
            if schedule.return_arrive[r] > depot_close + EPS_V:
                problems.append(f"v{r}: depot return after closing")
    return problems


EPS_V = 1e-6
