"""Experiment orchestration: multi-run campaigns, result tables, profiles.

Campaign outputs are a pure function of (manifest, seeds) under the logical
clock: the campaign directory is named by the manifest hash, every run writes
its report, decision log and event log under deterministic names, and reruns
skip cells whose report already exists.

The summary table keeps full precision and also reproduces the published
convention in which the grand average row is the mean of the one-decimal
rounded per-group averages.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import re
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .controller import ALGORITHM_IDS, ControllerConfig, RunReport, \
    choose_request_expectation, run_online
from .instances import (NONANTICIPATION_SCENARIOS, TRAVEL_TO_B, TRAVEL_TO_C,
                        build_nonanticipation_fixture, read_dynamic_instance)
from .oracle import Action, OracleGuard, OracleState, exact_multistage_value, \
    two_stage_value
from .plan import VehicleState

__all__ = [
    "RunReport",
    "ProfilePoint",
    "AggregateTable",
    "aggregate",
    "performance_profile",
    "run_campaign",
    "campaign_id",
    "nonanticipation_demo",
    "default_group",
]


def round1(x: float) -> float:
    """One-decimal rounding, half away from zero (the tables' convention)."""
    return float(Decimal(repr(x)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def default_group(instance_id: str) -> str:
    """Instances grouped by their family: a trailing -<number> (and an
    optional seed suffix) is stripped, so RC101-3 groups under RC101."""
    return re.sub(r"-\d+$", "", instance_id)


@dataclass(frozen=True)
class ProfilePoint:
    ratio: float
    fraction: float


@dataclass
class AggregateTable:
    instances: tuple[str, ...]
    algorithms: tuple[str, ...]
    cells: dict[tuple[str, str], float]
    counts: dict[tuple[str, str], int]
    missing: tuple[tuple[str, str], ...]
    group_of: Callable[[str], str]

    def groups(self) -> list[str]:
        seen = []
        for inst in self.instances:
            g = self.group_of(inst)
            if g not in seen:
                seen.append(g)
        return seen

    def group_average(self, algorithm: str, group: str) -> float:
        vals = [self.cells[(i, algorithm)] for i in self.instances
                if self.group_of(i) == group and (i, algorithm) in self.cells]
        return sum(vals) / len(vals)

    def grand_average(self, algorithm: str) -> float:
        vals = [self.cells[(i, algorithm)] for i in self.instances
                if (i, algorithm) in self.cells]
        return sum(vals) / len(vals)

    def table_average(self, algorithm: str) -> float:
        """Published-table convention: average the rounded group averages,
        then round again."""
        rounded = [round1(self.group_average(algorithm, g)) for g in self.groups()]
        return round1(sum(rounded) / len(rounded))

    def to_csv(self, rounded: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["instance"] + list(self.algorithms))
        fmt = (lambda x: f"{round1(x):.1f}") if rounded else (lambda x: repr(x))
        for group in self.groups():
            members = [i for i in self.instances if self.group_of(i) == group]
            for inst in members:
                w.writerow([inst] + [fmt(self.cells[(inst, a)])
                                     if (inst, a) in self.cells else ""
                                     for a in self.algorithms])
            w.writerow([f"Avg {group}"] +
                       [fmt(self.group_average(a, group)) for a in self.algorithms])
        if rounded:
            w.writerow(["AVG"] + [f"{self.table_average(a):.1f}"
                                  for a in self.algorithms])
        else:
            w.writerow(["AVG"] + [repr(self.grand_average(a))
                                  for a in self.algorithms])
        return buf.getvalue()


def aggregate(reports: Iterable[RunReport],
              group_of: Callable[[str], str] = default_group) -> AggregateTable:
    """Mean rejections per (instance, algorithm) cell over seeds. Cells with
    no report are listed as missing, never silently zeroed."""
    sums: dict[tuple[str, str], float] = {}
    counts: dict[tuple[str, str], int] = {}
    instances: list[str] = []
    algorithms: list[str] = []
    for rep in reports:
        key = (rep.instance_id, rep.algorithm_id)
        sums[key] = sums.get(key, 0.0) + rep.rejections
        counts[key] = counts.get(key, 0) + 1
        if rep.instance_id not in instances:
            instances.append(rep.instance_id)
        if rep.algorithm_id not in algorithms:
            algorithms.append(rep.algorithm_id)
    if not counts:
        raise ValueError("no reports to aggregate")
    instances.sort()
    algorithms.sort()
    cells = {k: sums[k] / counts[k] for k in counts}
    missing = tuple((i, a) for i in instances for a in algorithms
                    if (i, a) not in cells)
    return AggregateTable(instances=tuple(instances), algorithms=tuple(algorithms),
                          cells=cells, counts=counts, missing=missing,
                          group_of=group_of)


def performance_profile(table: AggregateTable | Mapping[tuple[str, str], float],
                        algorithms: Sequence[str] | None = None,
                        instances: Sequence[str] | None = None
                        ) -> dict[str, list[ProfilePoint]]:
    """Cumulative distribution of per-instance ratios to the per-instance
    best. Conventions for zero-rejection bests: 0/0 -> 1, v/0 -> +inf (a point
    the algorithm reaches only at x = infinity)."""
    if isinstance(table, AggregateTable):
        cells = table.cells
        algorithms = algorithms or table.algorithms
        instances = instances or table.instances
    else:
        cells = dict(table)
        if algorithms is None:
            algorithms = sorted({a for _i, a in cells})
        if instances is None:
            instances = sorted({i for i, _a in cells})
    ratios: dict[str, list[float]] = {a: [] for a in algorithms}
    for inst in instances:
        vals = {a: cells[(inst, a)] for a in algorithms if (inst, a) in cells}
        if not vals:
            continue
        best = min(vals.values())
        for a, v in vals.items():
            if best == 0.0:
                ratios[a].append(1.0 if v == 0.0 else math.inf)
            else:
                ratios[a].append(v / best)
    out: dict[str, list[ProfilePoint]] = {}
    for a in algorithms:
        rs = sorted(ratios[a])
        n = len(rs)
        points: list[ProfilePoint] = []
        finite = [r for r in rs if math.isfinite(r)]
        for r in sorted(set(finite)):
            frac = sum(1 for x in rs if x <= r) / n
            points.append(ProfilePoint(ratio=r, fraction=frac))
        if len(finite) < n:
            points.append(ProfilePoint(ratio=math.inf, fraction=1.0))
        out[a] = points
    return out


def profiles_to_csv(profiles: Mapping[str, Sequence[ProfilePoint]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["algorithm", "ratio", "fraction"])
    for a in sorted(profiles):
        for p in profiles[a]:
            w.writerow([a, "inf" if math.isinf(p.ratio) else repr(p.ratio),
                        repr(p.fraction)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Campaigns


def _canonical_manifest(manifest: Mapping) -> str:
    return json.dumps(manifest, sort_keys=True, separators=(",", ":"))


def campaign_id(manifest: Mapping) -> str:
    return hashlib.sha256(_canonical_manifest(manifest).encode()).hexdigest()[:12]


def _run_cell(args):
    instance_path, algorithm, seed, overrides = args
    instance = read_dynamic_instance(Path(instance_path).read_text())
    config = ControllerConfig.for_algorithm(algorithm, seed=seed, **overrides)
    log, report = run_online(instance, config)
    return log, report


def run_campaign(manifest: Mapping | str | Path, parallelism: int = 1,
                 out_root: str | Path = ".") -> Path:
    """Execute every (instance, algorithm, seed) cell of the manifest into a
    campaign directory named by the manifest hash. Existing reports are kept
    (idempotent per cell); individual failures are recorded and do not abort
    the campaign."""
    if not isinstance(manifest, Mapping):
        manifest = json.loads(Path(manifest).read_text())
    instances = manifest["instances"]
    algorithms = manifest.get("algorithms", list(ALGORITHM_IDS))
    seeds = manifest.get("seeds", [0])
    overrides = dict(manifest.get("config", {}))
    out_dir = Path(out_root) / f"campaign-{campaign_id(manifest)}"
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(_canonical_manifest(manifest) + "\n")

    cells = []
    for inst_path in instances:
        stem = Path(inst_path).stem
        for alg in algorithms:
            for seed in seeds:
                run_id = f"{stem}__{alg}__s{seed}"
                cells.append((run_id, inst_path, alg, seed))

    todo = [(rid, path, alg, seed) for rid, path, alg, seed in cells
            if not (out_dir / f"{rid}.report.json").exists()]

    def finish(run_id: str, outcome):
        if isinstance(outcome, Exception):
            (out_dir / f"{run_id}.failed.txt").write_text(
                f"{type(outcome).__name__}: {outcome}\n")
            return
        log, report = outcome
        (out_dir / f"{run_id}.log.txt").write_text(log.to_text())
        with (out_dir / f"{run_id}.events.jsonl").open("w") as fh:
            for ev in report.events:
                fh.write(json.dumps(ev, sort_keys=True) + "\n")
        payload = asdict(report)
        payload.pop("events")
        payload["event_log_path"] = f"{run_id}.events.jsonl"
        (out_dir / f"{run_id}.report.json").write_text(
            json.dumps(payload, sort_keys=True, indent=1) + "\n")

    if parallelism > 1 and len(todo) > 1:
        import multiprocessing as mp
        with mp.Pool(parallelism) as pool:
            args = [(path, alg, seed) + (overrides,) for _rid, path, alg, seed in todo]
            async_results = [(rid, pool.apply_async(_run_cell, ((path, alg, seed, overrides),)))
                             for rid, path, alg, seed in todo]
            for rid, ar in async_results:
                try:
                    finish(rid, ar.get())
                except Exception as exc:  # noqa: BLE001 - per-cell isolation
                    finish(rid, exc)
    else:
        for rid, path, alg, seed in todo:
            try:
                finish(rid, _run_cell((path, alg, seed, overrides)))
            except Exception as exc:  # noqa: BLE001 - per-cell isolation
                finish(rid, exc)

    reports = load_reports(out_dir)
    failures = sorted(p.name for p in out_dir.glob("*.failed.txt"))
    if failures:
        (out_dir / "failures.csv").write_text("\n".join(failures) + "\n")
    if reports:
        table = aggregate(reports)
        (out_dir / "table.csv").write_text(table.to_csv(rounded=False))
        (out_dir / "table_rounded.csv").write_text(table.to_csv(rounded=True))
        profiles = performance_profile(table)
        (out_dir / "profiles.csv").write_text(profiles_to_csv(profiles))
    return out_dir


def load_reports(directory: str | Path) -> list[RunReport]:
    reports = []
    for path in sorted(Path(directory).glob("*.report.json")):
        data = json.loads(path.read_text())
        data["events"] = ()
        reports.append(RunReport(**data))
    return reports


# ---------------------------------------------------------------------------
# Two-scenario demonstration (CLI subcommand `fig1`)


def nonanticipation_demo() -> dict:
    """Evaluate both epoch-1 candidate actions of the two-scenario fixture
    under the exact multistage and two-stage evaluations, and report which
    action each rule picks (the expectation rule carries the two-stage
    optimism and picks the other hub)."""
    inst = build_nonanticipation_fixture()
    guard = OracleGuard(max_vertices=9, max_horizon=40, max_scenarios=2)
    state = OracleState(epoch=1, vehicles=(VehicleState(0, 1.0, 0.0),))
    actions = {
        "travel-to-b": Action.travel(TRAVEL_TO_B),
        "travel-to-c": Action.travel(TRAVEL_TO_C),
    }
    exact = {}
    relaxed = {}
    for label, action in actions.items():
        exact[label] = exact_multistage_value(
            inst, NONANTICIPATION_SCENARIOS, state=state, candidate=action,
            guard=guard)
        relaxed[label] = two_stage_value(
            inst, NONANTICIPATION_SCENARIOS, state=state, candidate=action,
            guard=guard)
    exp_choice, exp_scores = choose_request_expectation(
        inst, list(actions.items()), NONANTICIPATION_SCENARIOS, state=state,
        guard=guard)
    record = {
        "exact": exact,
        "two_stage": relaxed,
        "multistage_choice": min(exact, key=lambda k: (exact[k], k)),
        "two_stage_choice": min(relaxed, key=lambda k: (relaxed[k], k)),
        "expectation_choice": exp_choice,
        "expectation_scores": exp_scores,
        "committed_wrong_hub_cost": exact["travel-to-b"],
    }
    return record
