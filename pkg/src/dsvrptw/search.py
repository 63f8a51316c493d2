"""Local-search move operators, round-robin shaking, annealing acceptance.

Candidates may be schedule-infeasible; the evaluators reject them through the
+inf sentinel, so operators only guarantee structural validity (the multiset
of service visits is preserved by everything except the relocation pair,
which touches only relocation waypoints).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .instances import Instance
from .plan import RELOCATION, RoutePlan, Visit

__all__ = [
    "BASE_OPERATORS",
    "WAIT_OPERATORS",
    "RELOCATION_OPERATORS",
    "applicable_operators",
    "apply_move",
    "OperatorRotor",
    "shake_solution",
    "AnnealingState",
    "anneal_accept",
]

BASE_OPERATORS = ("relocateVisit", "swap", "inverted2opt", "crossExchange")
WAIT_OPERATORS = ("waitIncrease", "waitDecrease")
RELOCATION_OPERATORS = ("relocationInsert", "relocationRemove")


def applicable_operators(strategy: str, relocation_enabled: bool) -> tuple[str, ...]:
    """Rotation list in its documented (reproducibility-relevant) order."""
    ops = list(BASE_OPERATORS)
    if strategy == "CW":
        ops.extend(WAIT_OPERATORS)
    if relocation_enabled:
        ops.extend(RELOCATION_OPERATORS)
    return tuple(ops)


def _positions(routes) -> list[tuple[int, int]]:
    return [(r, i) for r, route in enumerate(routes) for i in range(len(route))]


def _pick(rng: np.random.Generator, n: int) -> int:
    return int(rng.integers(0, n))


def apply_move(plan: RoutePlan, op: str, rng: np.random.Generator,
               instance: Instance | None = None) -> RoutePlan:
    """Apply one operator with uniformly drawn targets; degenerate plans come
    back unchanged. Raises on an operator the plan's config does not admit."""
    allowed = applicable_operators(plan.strategy, plan.relocation_enabled)
    if op not in allowed:
        raise ValueError(f"operator {op} not applicable under {plan.strategy}"
                         f"/relocation={plan.relocation_enabled}")
    routes = [list(r) for r in plan.routes]
    pos = _positions(routes)

    if op == "relocateVisit":
        if not pos:
            return plan
        r, i = pos[_pick(rng, len(pos))]
        visit = routes[r].pop(i)
        slots = [(r2, j) for r2, route in enumerate(routes)
                 for j in range(len(route) + 1)]
        r2, j = slots[_pick(rng, len(slots))]
        routes[r2].insert(j, visit)

    elif op == "swap":
        if len(pos) < 2:
            return plan
        a = _pick(rng, len(pos))
        b = _pick(rng, len(pos) - 1)
        if b >= a:
            b += 1
        (r1, i1), (r2, i2) = pos[a], pos[b]
        routes[r1][i1], routes[r2][i2] = routes[r2][i2], routes[r1][i1]

    elif op == "inverted2opt":
        nonempty = [r for r, route in enumerate(routes) if route]
        if not nonempty:
            return plan
        r = nonempty[_pick(rng, len(nonempty))]
        n = len(routes[r])
        i = _pick(rng, n)
        j = _pick(rng, n)
        if i > j:
            i, j = j, i
        routes[r][i:j + 1] = routes[r][i:j + 1][::-1]

    elif op == "crossExchange":
        nonempty = [r for r, route in enumerate(routes) if route]
        if len(nonempty) < 2:
            return plan
        a = _pick(rng, len(nonempty))
        b = _pick(rng, len(nonempty) - 1)
        if b >= a:
            b += 1
        r1, r2 = nonempty[a], nonempty[b]
        l1 = 1 + _pick(rng, min(3, len(routes[r1])))
        l2 = 1 + _pick(rng, min(3, len(routes[r2])))
        i1 = _pick(rng, len(routes[r1]) - l1 + 1)
        i2 = _pick(rng, len(routes[r2]) - l2 + 1)
        seg1 = routes[r1][i1:i1 + l1]
        seg2 = routes[r2][i2:i2 + l2]
        routes[r1][i1:i1 + l1] = seg2
        routes[r2][i2:i2 + l2] = seg1

    elif op in ("waitIncrease", "waitDecrease"):
        if not pos:
            return plan
        r, i = pos[_pick(rng, len(pos))]
        visit = routes[r][i]
        delta = 1 if op == "waitIncrease" else -1
        wait = max(0, visit.custom_wait + delta)
        if wait == visit.custom_wait:
            return plan
        routes[r][i] = Visit(visit.vertex, visit.kind, visit.request, wait)

    elif op == "relocationInsert":
        if instance is None:
            raise ValueError("relocationInsert needs the instance")
        planned = {v.vertex for route in routes for v in route if not v.is_relocation}
        mass = instance.reveal_prob[plan.plan_start_epoch:, :].sum(axis=0)
        cands = [v for v in range(1, instance.n + 1)
                 if mass[v] > 0.0 and v not in planned]
        if not cands:
            return plan
        vertex = cands[_pick(rng, len(cands))]
        slots = [(r2, j) for r2, route in enumerate(routes)
                 for j in range(len(route) + 1)]
        r2, j = slots[_pick(rng, len(slots))]
        routes[r2].insert(j, Visit(vertex=vertex, kind=RELOCATION))

    elif op == "relocationRemove":
        relocs = [(r, i) for r, route in enumerate(routes)
                  for i, v in enumerate(route) if v.is_relocation]
        if not relocs:
            return plan
        r, i = relocs[_pick(rng, len(relocs))]
        routes[r].pop(i)

    else:  # pragma: no cover - exhaustiveness guard
        raise ValueError(f"unknown operator {op}")

    return plan.with_routes(routes)


@dataclass(frozen=True)
class OperatorRotor:
    """Fixed round-robin over the applicable operator list."""

    operators: tuple[str, ...]
    index: int = 0

    @staticmethod
    def for_plan(plan: RoutePlan) -> "OperatorRotor":
        return OperatorRotor(applicable_operators(plan.strategy,
                                                  plan.relocation_enabled))

    @property
    def current(self) -> str:
        return self.operators[self.index]

    def advanced(self) -> "OperatorRotor":
        return OperatorRotor(self.operators, (self.index + 1) % len(self.operators))


def shake_solution(plan: RoutePlan, rotor: OperatorRotor, rng: np.random.Generator,
                   instance: Instance | None = None):
    """Apply the rotor's next operator; returns (candidate, advanced rotor,
    operator name)."""
    op = rotor.current
    return apply_move(plan, op, rng, instance), rotor.advanced(), op


@dataclass
class AnnealingState:
    temperature: float
    cooling_rate: float
    rng: np.random.Generator

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if not 0.0 < self.cooling_rate < 1.0:
            raise ValueError("cooling rate must lie in (0,1)")


def anneal_accept(current_cost: float, candidate_cost: float,
                  state: AnnealingState) -> tuple[bool, AnnealingState]:
    """Metropolis rule: accept non-worsening candidates outright, worse ones
    with probability exp(-delta/T); the temperature cools geometrically on
    every call, accepted or not."""
    if candidate_cost <= current_cost:
        accepted = True
    else:
        # exp underflows to 0 for an infeasible (+inf) candidate
        accepted = state.rng.random() < math.exp(
            (current_cost - candidate_cost) / state.temperature)
    new_state = AnnealingState(state.temperature * state.cooling_rate,
                               state.cooling_rate, state.rng)
    return accepted, new_state
