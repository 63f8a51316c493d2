"""Monte Carlo scenario sampling and pool maintenance.

A scenario is one realization of the future reveal process over the remaining
horizon; pools hold a fixed number of equiprobable scenarios, get reconciled
against reality every epoch (matching reveals are absorbed, missed ones are
removed or randomly delayed), and are resampled wholesale every beta
improvement iterations.

Randomness comes from the generator carried by the pool; consumption order is
pool init, then per-epoch update, then per-resample, so seeded runs replay
bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .instances import Instance, Request

__all__ = [
    "Scenario",
    "ScenarioPool",
    "latest_useful_epoch",
    "sample_scenario",
    "new_pool",
    "update_pool",
    "resample_pool",
]


def latest_useful_epoch(instance: Instance, vertex: int) -> int:
    """Latest epoch at which a reveal for ``vertex`` can still be served:
    min(l0 - t(v,0) - d_v, l_v - t(0,v)), floored at 0. Reveals later than
    this are inserviceable and never sampled."""
    if not 1 <= vertex <= instance.n:
        raise ValueError(f"vertex {vertex} out of range")
    l0 = float(instance.tw_late[0])
    bound = min(
        l0 - instance.travel[vertex, 0] - float(instance.service[vertex]),
        float(instance.tw_late[vertex]) - instance.travel[0, vertex],
    )
    return max(0, int(math.floor(bound + 1e-9)))


@dataclass(frozen=True)
class Scenario:
    """Sampled future reveals from ``start_epoch`` on, sorted by (epoch, vertex)."""

    start_epoch: int
    reveals: tuple[tuple[int, int], ...] = ()   # (vertex, epoch)

    def __post_init__(self):
        ordered = tuple(sorted(self.reveals, key=lambda r: (r[1], r[0])))
        object.__setattr__(self, "reveals", ordered)

    def __len__(self) -> int:
        return len(self.reveals)

    def dump(self) -> str:
        return " ".join(f"{t}:{v}" for v, t in self.reveals)


def sample_scenario(instance: Instance, from_epoch: int,
                    rng: np.random.Generator) -> Scenario:
    """Independent Bernoulli draw per (epoch, vertex) cell of the reveal
    matrix over [from_epoch, H], truncated at each vertex's latest useful
    epoch. Several reveals for one vertex may coexist."""
    if not 1 <= from_epoch <= instance.horizon:
        raise ValueError("from_epoch outside [1, H]")
    block = instance.reveal_prob[from_epoch:instance.horizon + 1, 1:]
    draws = rng.random(block.shape)
    hits = np.nonzero(draws < block)
    reveals = []
    bounds = {}
    for row, col in zip(hits[0], hits[1]):
        vertex = int(col) + 1
        epoch = int(row) + from_epoch
        if vertex not in bounds:
            bounds[vertex] = latest_useful_epoch(instance, vertex)
        if epoch <= bounds[vertex]:
            reveals.append((vertex, epoch))
    return Scenario(start_epoch=from_epoch, reveals=tuple(reveals))


@dataclass
class ScenarioPool:
    """Pool of ``pool_size`` equiprobable scenarios sharing one start epoch."""

    scenarios: tuple[Scenario, ...]
    pool_size: int
    resample_period: int
    start_epoch: int
    rng: np.random.Generator
    iterations_since_resample: int = 0
    _packed: Optional[tuple[np.ndarray, np.ndarray, np.ndarray]] = field(
        default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.scenarios) != self.pool_size:
            raise ValueError("pool must hold exactly pool_size scenarios")
        for s in self.scenarios:
            if s.start_epoch != self.start_epoch:
                raise ValueError("scenarios must share the pool start epoch")

    def packed(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(vertices, epochs, offsets) flattening for the kernels, cached."""
        if self._packed is None:
            verts, epochs, off = [], [], [0]
            for s in self.scenarios:
                for v, t in s.reveals:
                    verts.append(v)
                    epochs.append(t)
                off.append(len(verts))
            self._packed = (
                np.array(verts, dtype=np.int64),
                np.array(epochs, dtype=np.int64),
                np.array(off, dtype=np.int64),
            )
        return self._packed

    def dump(self) -> str:
        return "\n".join(s.dump() for s in self.scenarios) + "\n"


def new_pool(instance: Instance, pool_size: int, resample_period: int,
             from_epoch: int, rng: np.random.Generator) -> ScenarioPool:
    scenarios = tuple(sample_scenario(instance, from_epoch, rng)
                      for _ in range(pool_size))
    return ScenarioPool(scenarios=scenarios, pool_size=pool_size,
                        resample_period=resample_period,
                        start_epoch=from_epoch, rng=rng)


def update_pool(pool: ScenarioPool, realized: Iterable[Request], epoch: int,
                instance: Instance) -> ScenarioPool:
    """Reconcile the pool with the reveals realized at ``epoch``.

    Per scenario: a sampled reveal at this epoch matching a realized request
    is dropped (it is now known and lives in the decision log); an unmatched
    one is removed when the epoch reached the vertex's latest useful epoch,
    otherwise delayed to a uniform epoch in (epoch, latest_useful_epoch].
    The pool then covers epoch+1 onward.
    """
    if pool.start_epoch != epoch:
        raise ValueError(f"pool covers {pool.start_epoch}, update asked for {epoch}")
    realized_counts: dict[int, int] = {}
    for req in realized:
        if req.reveal_epoch == epoch:
            realized_counts[req.vertex] = realized_counts.get(req.vertex, 0) + 1
    bounds: dict[int, int] = {}
    new_scenarios = []
    for scen in pool.scenarios:
        budget = dict(realized_counts)
        keep: list[tuple[int, int]] = []
        for vertex, t in scen.reveals:
            if t > epoch:
                keep.append((vertex, t))
                continue
            if t < epoch:
                continue  # stale; superseded by earlier updates
            if budget.get(vertex, 0) > 0:
                budget[vertex] -= 1
                continue
            if vertex not in bounds:
                bounds[vertex] = latest_useful_epoch(instance, vertex)
            rbar = bounds[vertex]
            if epoch >= rbar:
                continue
            delayed = int(pool.rng.integers(epoch + 1, rbar + 1))
            keep.append((vertex, delayed))
        new_scenarios.append(Scenario(start_epoch=epoch + 1, reveals=tuple(keep)))
    return ScenarioPool(
        scenarios=tuple(new_scenarios), pool_size=pool.pool_size,
        resample_period=pool.resample_period, start_epoch=epoch + 1,
        rng=pool.rng, iterations_since_resample=pool.iterations_since_resample)


def resample_pool(pool: ScenarioPool, instance: Instance, epoch: int) -> ScenarioPool:
    """Fresh pool of pool_size scenarios sampled from epoch+1; resets the
    iteration counter."""
    from_epoch = min(epoch + 1, instance.horizon)
    scenarios = tuple(sample_scenario(instance, from_epoch, pool.rng)
                      for _ in range(pool.pool_size))
    return ScenarioPool(scenarios=scenarios, pool_size=pool.pool_size,
                        resample_period=pool.resample_period,
                        start_epoch=from_epoch, rng=pool.rng,
                        iterations_since_resample=0)
