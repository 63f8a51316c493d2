"""Exact evaluation of tiny instances by exhaustive nonanticipative search.

``exact_multistage_value`` minimizes the probability-weighted rejection count
over joint action sequences for a full scenario enumeration, subject to the
constraint that scenarios sharing a reveal prefix share the action prefix.
``two_stage_value`` drops that constraint and optimizes each scenario
independently, so it always lower-bounds the multistage value.

These are test oracles: the action grid is integer epochs (lossless when all
travel times are integers), and a guard refuses anything big enough to blow
up the exhaustive search. Guard limits are configuration, not physics; the
nonanticipation demo passes a wider guard explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product
from typing import Optional, Sequence

import numpy as np

from .instances import Instance
from .plan import VehicleState, depot_states
from .scenarios import Scenario

__all__ = [
    "OracleGuard",
    "GuardExceededError",
    "Action",
    "OracleState",
    "default_state",
    "exact_multistage_value",
    "two_stage_value",
    "shortest_paths",
]

EPS = 1e-9
INF = math.inf


class GuardExceededError(RuntimeError):
    """The input is too large for exhaustive search; raise rather than hang."""


@dataclass(frozen=True)
class OracleGuard:
    max_vertices: int = 6     # total graph vertices including the depot
    max_horizon: int = 12     # remaining epochs after the evaluated action
    max_scenarios: int = 8

    def check(self, instance: Instance, n_scenarios: int, remaining: int) -> None:
        if instance.n + 1 > self.max_vertices:
            raise GuardExceededError(
                f"{instance.n + 1} vertices exceeds guard {self.max_vertices}")
        if remaining > self.max_horizon:
            raise GuardExceededError(
                f"remaining horizon {remaining} exceeds guard {self.max_horizon}")
        if n_scenarios > self.max_scenarios:
            raise GuardExceededError(
                f"{n_scenarios} scenarios exceeds guard {self.max_scenarios}")


@dataclass(frozen=True)
class Action:
    """One epoch's decision: per-vehicle operational moves plus accept/reject
    for the requests revealed at that epoch.

    Moves: ("wait",), ("travel", vertex), ("serve", next_vertex_or_None).
    """

    moves: tuple[tuple, ...] = ()
    accepts: frozenset = frozenset()
    rejects: frozenset = frozenset()

    @staticmethod
    def travel(*targets: int) -> "Action":
        return Action(moves=tuple(("travel", t) for t in targets))


@dataclass(frozen=True)
class OracleState:
    """Committed situation at the start of ``epoch``: vehicle states, accepted
    but unserved requests as (vertex, earliest service epoch), rejections so
    far."""

    epoch: int
    vehicles: tuple[VehicleState, ...]
    pending: tuple[tuple[int, int], ...] = ()
    rejected: int = 0


def default_state(instance: Instance) -> OracleState:
    pending = tuple(sorted((r.vertex, max(1, r.reveal_epoch))
                           for r in instance.deterministic_requests))
    return OracleState(epoch=0, vehicles=depot_states(instance), pending=pending)


def shortest_paths(travel: np.ndarray) -> np.ndarray:
    sp = travel.astype(np.float64).copy()
    nv = sp.shape[0]
    for m in range(nv):
        sp = np.minimum(sp, sp[:, m:m + 1] + sp[m:m + 1, :])
    return sp


def _normalize_scenarios(scenarios) -> list[tuple[tuple[int, int], ...]]:
    out = []
    for s in scenarios:
        reveals = s.reveals if isinstance(s, Scenario) else tuple(s)
        out.append(tuple(sorted(((int(v), int(t)) for v, t in reveals),
                                key=lambda r: (r[1], r[0]))))
    return out


class _Search:
    def __init__(self, instance: Instance, scenarios, probs):
        self.inst = instance
        self.scen = scenarios
        self.probs = probs
        self.sp = shortest_paths(instance.travel)
        self.h = instance.horizon
        self.l0 = float(instance.tw_late[0])
        self.ew = instance.tw_early
        self.lw = instance.tw_late
        self.dur = instance.service
        self.dem = instance.demand
        self.cap = instance.capacity
        self.by_epoch = []
        self.max_epoch = []
        for reveals in scenarios:
            m = {}
            for v, t in reveals:
                m.setdefault(t, []).append(v)
            self.by_epoch.append({t: tuple(sorted(vs)) for t, vs in m.items()})
            self.max_epoch.append(max((t for _, t in reveals), default=0))
        self.memo: dict = {}

    # -- pruning -----------------------------------------------------------

    def _stranded(self, vehicles) -> bool:
        for s in vehicles:
            if s.free + self.sp[s.vertex, 0] > self.l0 + EPS:
                return True
        return False

    def _unservable(self, pending, vehicles) -> bool:
        for v, ms in pending:
            ok = False
            for s in vehicles:
                if s.load + self.dem[v] > self.cap + EPS:
                    continue
                arrive = s.free + self.sp[s.vertex, v]
                if max(arrive, float(self.ew[v]), float(ms)) <= self.lw[v] + EPS:
                    ok = True
                    break
            if not ok:
                return True
        return False

    def _no_future(self, group, epoch) -> bool:
        return all(self.max_epoch[si] < epoch for si in group)

    # -- actions -----------------------------------------------------------

    def _vehicle_options(self, state: VehicleState, pending, epoch):
        opts = [("wait",)]
        if state.free > epoch + EPS:
            return [("busy",)]
        served = set()
        for idx, (v, ms) in enumerate(pending):
            if v != state.vertex or (v, ms) in served:
                continue
            served.add((v, ms))
            if epoch < max(self.ew[v], ms) or epoch > self.lw[v]:
                continue
            if state.load + self.dem[v] > self.cap + EPS:
                continue
            opts.append(("serve", idx, None))
            for u in range(self.inst.n + 1):
                if u != v:
                    opts.append(("serve", idx, u))
        for u in range(self.inst.n + 1):
            if u != state.vertex:
                opts.append(("travel", u))
        return opts

    def _apply(self, vehicles, pending, ops, epoch):
        veh = list(vehicles)
        pend = list(pending)
        removed = []
        for r, op in enumerate(ops):
            kind = op[0]
            if kind in ("wait", "busy"):
                continue
            s = veh[r]
            if kind == "travel":
                u = op[1]
                veh[r] = VehicleState(u, float(epoch) + self.inst.travel[s.vertex, u],
                                      s.load)
            else:  # serve
                idx = op[1]
                if idx in removed:
                    return None
                removed.append(idx)
                v, _ms = pending[idx]
                free = float(epoch) + float(self.dur[v])
                load = s.load + float(self.dem[v])
                u = op[2]
                if u is None:
                    veh[r] = VehicleState(v, free, load)
                else:
                    veh[r] = VehicleState(u, free + self.inst.travel[v, u], load)
        for idx in sorted(removed, reverse=True):
            del pend[idx]
        return tuple(veh), tuple(pend)

    # -- search ------------------------------------------------------------

    def value(self, epoch, group, vehicles, pending) -> float:
        if self._stranded(vehicles) or self._unservable(pending, vehicles):
            return INF
        if not pending and self._no_future(group, epoch):
            return 0.0
        if epoch > self.h:
            if pending:
                return INF
            for s in vehicles:
                if s.vertex != 0 or s.free > self.l0 + EPS:
                    return INF
            return 0.0
        key = (epoch, group, tuple(sorted(vehicles)), pending)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        sigs: dict[tuple, list[int]] = {}
        for si in group:
            sigs.setdefault(self.by_epoch[si].get(epoch, ()), []).append(si)
        total = 0.0
        wtotal = 0.0
        for sig in sorted(sigs):
            sub = tuple(sigs[sig])
            w = sum(self.probs[si] for si in sub)
            best = self._best_action_value(epoch, sub, vehicles, pending, sig)
            total += w * best
            wtotal += w
        result = total / wtotal if wtotal > 0 else 0.0
        self.memo[key] = result
        return result

    def _best_action_value(self, epoch, sub, vehicles, pending, sig) -> float:
        best = INF
        m = len(sig)
        # accept the largest subsets first: fewer immediate rejections
        for keep in range(m, -1, -1):
            if best <= (m - keep):
                break  # cannot improve: every branch below rejects at least this many
            for picked in combinations(range(m), keep):
                rej = m - keep
                pend2 = tuple(sorted(pending + tuple((sig[i], epoch) for i in picked)))
                option_lists = [self._vehicle_options(s, pend2, epoch)
                                for s in vehicles]
                for ops in product(*option_lists):
                    applied = self._apply(vehicles, pend2, ops, epoch)
                    if applied is None:
                        continue
                    veh2, pend3 = applied
                    val = rej + self.value(epoch + 1, sub, veh2, pend3)
                    if val < best:
                        best = val
                        if best <= rej:
                            break
                if best == 0.0:
                    return 0.0
                if best <= rej:
                    break  # other subsets of this size reject just as many
        return best


def _prepare(instance, scenarios, probs, state, guard):
    state = state or default_state(instance)
    scen = _normalize_scenarios(scenarios)
    if probs is None:
        probs = [1.0 / len(scen)] * len(scen)
    else:
        total = float(sum(probs))
        if total <= 0:
            raise ValueError("scenario probabilities must sum to a positive value")
        probs = [float(p) / total for p in probs]
    if len(probs) != len(scen):
        raise ValueError("one probability per scenario required")
    for reveals in scen:
        for _v, t in reveals:
            if t <= state.epoch:
                raise ValueError("scenario reveals must lie after the evaluated epoch")
    guard = guard or OracleGuard()
    guard.check(instance, len(scen), instance.horizon - state.epoch)
    return state, scen, probs


def _apply_candidate(search: _Search, state: OracleState, candidate: Optional[Action]):
    vehicles = state.vehicles
    pending = state.pending
    rej = 0
    if candidate is not None:
        pending = tuple(sorted(pending + tuple((v, state.epoch)
                                               for v in sorted(candidate.accepts))))
        rej += len(candidate.rejects)
        moves = candidate.moves or tuple(("wait",) for _ in vehicles)
        if len(moves) != len(vehicles):
            raise ValueError("candidate action needs one move per vehicle")
        ops = []
        for r, mv in enumerate(moves):
            if mv[0] == "serve":
                v = vehicles[r].vertex
                idx = next((i for i, (pv, _ms) in enumerate(pending) if pv == v), None)
                if idx is None:
                    raise ValueError(f"vehicle {r} cannot serve: nothing pending at {v}")
                ops.append(("serve", idx, mv[1]))
            else:
                ops.append(mv)
        applied = search._apply(vehicles, pending, tuple(ops), state.epoch)
        if applied is None:
            raise ValueError("invalid candidate action")
        vehicles, pending = applied
    return vehicles, pending, rej


def exact_multistage_value(instance: Instance, scenarios: Sequence, probs=None,
                           state: OracleState | None = None,
                           candidate: Action | None = None,
                           guard: OracleGuard | None = None) -> float:
    """Optimal expected rejection count over the scenario enumeration with
    shared-prefix (nonanticipativity) constraints enforced."""
    state, scen, probs = _prepare(instance, scenarios, probs, state, guard)
    search = _Search(instance, scen, probs)
    vehicles, pending, rej = _apply_candidate(search, state, candidate)
    group = tuple(range(len(scen)))
    return state.rejected + rej + search.value(state.epoch + 1, group, vehicles, pending)


def two_stage_value(instance: Instance, scenarios: Sequence, probs=None,
                    state: OracleState | None = None,
                    candidate: Action | None = None,
                    guard: OracleGuard | None = None) -> float:
    """Per-scenario independent optimum, probability-weighted: the relaxation
    obtained by dropping the shared-prefix constraints."""
    state, scen, probs = _prepare(instance, scenarios, probs, state, guard)
    total = 0.0
    for i, reveals in enumerate(scen):
        search = _Search(instance, [reveals], [1.0])
        vehicles, pending, rej = _apply_candidate(search, state, candidate)
        val = rej + search.value(state.epoch + 1, (0,), vehicles, pending)
        total += probs[i] * val
    return state.rejected + total
