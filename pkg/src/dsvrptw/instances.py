"""Problem data: static instances, the dynamic-request model, file formats.

An :class:`Instance` is the immutable world description: travel times over
vertices ``0..n`` (0 is the depot), demands, service durations, time windows,
fleet size/capacity, the discrete horizon ``[1, H]``, per-epoch reveal
probabilities ``P[t][i]``, and the request stream (deterministic requests
revealed at epoch 0 plus the realized dynamic reveals used for replay).

Two text formats are supported: Solomon-style static files (vehicle header +
``id x y demand ready due service`` rows) and a self-contained dynamic format
with ``[STATIC]``, ``[REVEALS]`` and ``[PROBABILITY]`` sections so generated
runs replay without the generator.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Instance",
    "Request",
    "ClassProfile",
    "CLASS_PROFILES",
    "ParseError",
    "ValidationError",
    "UnsupportedClassError",
    "parse_static_instance",
    "generate_dynamic_instance",
    "make_synthetic_base",
    "build_nonanticipation_fixture",
    "NONANTICIPATION_SCENARIOS",
    "write_dynamic_instance",
    "read_dynamic_instance",
    "truncate_tenth",
]


class ParseError(ValueError):
    """Malformed instance text; carries the 1-based offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ValueError):
    pass


class UnsupportedClassError(ValueError):
    pass


def truncate_tenth(x: float) -> float:
    """One-decimal truncation used for Euclidean travel times."""
    return math.floor(x * 10.0 + 1e-9) / 10.0


@dataclass(frozen=True, order=True)
class Request:
    """A service request for ``vertex`` revealed at ``reveal_epoch``.

    ``reveal_epoch == 0`` marks a deterministic (a priori) request.
    ``arrival_index`` breaks ties among same-epoch reveals and is unique
    within one epoch.
    """

    vertex: int
    reveal_epoch: int
    arrival_index: int = 0

    def key(self) -> str:
        return f"{self.vertex}@{self.reveal_epoch}#{self.arrival_index}"


@dataclass(frozen=True)
class ClassProfile:
    """One row of the benchmark class table: per-region reveal probabilities
    for the three time slices, plus the paper's nominal degree of dynamism.

    ``dod`` is kept as published metadata; the measurable dynamic fraction is
    ``dynamic_fraction`` (the probability rows do not reproduce the printed
    DOD for classes 1-5).
    """

    class_id: int
    dod: float
    p_initial: float
    p_early: float
    p_late: float

    def __post_init__(self):
        for p in (self.p_initial, self.p_early, self.p_late):
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"slice probability {p} outside [0,1]")

    @property
    def dynamic_fraction(self) -> float:
        total = self.p_initial + self.p_early + self.p_late
        if total == 0.0:
            return 0.0
        return (self.p_early + self.p_late) / total


CLASS_PROFILES = {
    1: ClassProfile(1, 0.44, 0.5, 0.25, 0.25),
    2: ClassProfile(2, 0.44, 0.5, 0.25, 0.25),
    3: ClassProfile(3, 0.44, 0.5, 0.25, 0.25),
    4: ClassProfile(4, 0.57, 0.2, 0.2, 0.6),
    5: ClassProfile(5, 0.81, 0.1, 0.1, 0.8),
    6: ClassProfile(6, 1.00, 0.0, 0.3, 0.7),
}


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Instance:
    """Static world data plus the request model. Immutable after construction."""

    horizon: int
    travel: np.ndarray            # (n+1, n+1) float64, asymmetric allowed
    demand: np.ndarray            # (n+1,) float64, depot 0
    service: np.ndarray           # (n+1,) int64 epochs, depot 0
    tw_early: np.ndarray          # (n+1,) int64; index 0 = earliest route start
    tw_late: np.ndarray           # (n+1,) int64; index 0 = latest depot return
    vehicle_count: int
    capacity: float
    reveal_prob: np.ndarray       # (H+1, n+1) float64, row 0 and column 0 unused
    deterministic_requests: tuple[Request, ...] = ()
    dynamic_requests: tuple[Request, ...] = ()
    name: str = ""

    def __post_init__(self):
        travel = np.ascontiguousarray(self.travel, dtype=np.float64)
        object.__setattr__(self, "travel", _readonly(travel))
        for attr, dtype in (
            ("demand", np.float64),
            ("service", np.int64),
            ("tw_early", np.int64),
            ("tw_late", np.int64),
        ):
            arr = np.ascontiguousarray(getattr(self, attr), dtype=dtype)
            object.__setattr__(self, attr, _readonly(arr))
        prob = np.ascontiguousarray(self.reveal_prob, dtype=np.float64)
        object.__setattr__(self, "reveal_prob", _readonly(prob))
        object.__setattr__(self, "deterministic_requests", tuple(self.deterministic_requests))
        object.__setattr__(self, "dynamic_requests", tuple(self.dynamic_requests))
        self._validate()

    @property
    def n(self) -> int:
        return self.travel.shape[0] - 1

    @property
    def all_requests(self) -> tuple[Request, ...]:
        return self.deterministic_requests + self.dynamic_requests

    def _validate(self):
        nv = self.travel.shape[0]
        if self.travel.shape != (nv, nv):
            raise ValidationError("travel matrix must be square")
        if nv < 1:
            raise ValidationError("need at least the depot vertex")
        if np.any(np.diag(self.travel) != 0.0):
            raise ValidationError("travel diagonal must be zero")
        if np.any(self.travel < 0.0):
            raise ValidationError("negative travel time")
        for arr, label in ((self.demand, "demand"), (self.service, "service"),
                           (self.tw_early, "tw_early"), (self.tw_late, "tw_late")):
            if arr.shape != (nv,):
                raise ValidationError(f"{label} must have one entry per vertex")
        if np.any(self.demand < 0.0):
            raise ValidationError("negative demand")
        if np.any(self.service < 0):
            raise ValidationError("negative service duration")
        if np.any(self.tw_early > self.tw_late):
            raise ValidationError("time window with e > l")
        if self.horizon < 1:
            raise ValidationError("horizon must be >= 1")
        if np.any(self.tw_early < 1) or np.any(self.tw_late > self.horizon):
            raise ValidationError("time windows must lie in [1, H]")
        if np.any(self.service > self.horizon):
            raise ValidationError("service duration exceeds the horizon")
        if self.vehicle_count < 1:
            raise ValidationError("need at least one vehicle")
        if self.capacity < 0.0:
            raise ValidationError("negative capacity")
        if self.reveal_prob.shape != (self.horizon + 1, nv):
            raise ValidationError("reveal_prob must be (H+1, n+1)")
        if np.any(self.reveal_prob < 0.0) or np.any(self.reveal_prob > 1.0):
            raise ValidationError("reveal probability outside [0,1]")
        seen = {}
        for req in self.all_requests:
            if not 1 <= req.vertex <= self.n:
                raise ValidationError(f"request vertex {req.vertex} out of range")
            if not 0 <= req.reveal_epoch <= self.horizon:
                raise ValidationError(f"reveal epoch {req.reveal_epoch} out of range")
            key = (req.reveal_epoch, req.arrival_index)
            if key in seen:
                raise ValidationError(f"duplicate arrival index {key}")
            seen[key] = req

    def requests_by_epoch(self) -> dict[int, list[Request]]:
        out: dict[int, list[Request]] = {}
        for req in self.all_requests:
            out.setdefault(req.reveal_epoch, []).append(req)
        for reqs in out.values():
            reqs.sort(key=lambda r: r.arrival_index)
        return out


# ---------------------------------------------------------------------------
# Solomon-style static files


def _lines(source) -> list[str]:
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = source
    return text.splitlines()


def parse_static_instance(source) -> Instance:
    """Parse a Solomon-style static file into an :class:`Instance`.

    Header: the first all-numeric 2-field line gives vehicle count and
    capacity. Body: ``id x y demand ready due service`` rows; id 0 is the
    depot. Travel times are Euclidean distances truncated to one decimal.
    The depot due date becomes the horizon; every customer becomes a
    deterministic request.
    """
    vehicles = None
    capacity = None
    rows = {}
    order = []
    for lineno, raw in enumerate(_lines(source), start=1):
        parts = raw.split()
        if not parts:
            continue
        try:
            nums = [float(p) for p in parts]
        except ValueError:
            continue  # header or label line
        if vehicles is None:
            if len(nums) == 2:
                vehicles = int(nums[0])
                capacity = float(nums[1])
                continue
            if len(nums) >= 7:
                raise ParseError("customer row before vehicle header", lineno)
            raise ParseError("expected 'vehicles capacity' header", lineno)
        if len(nums) < 7:
            raise ParseError(f"expected 7 fields, got {len(nums)}", lineno)
        vid = int(nums[0])
        if vid in rows:
            raise ValidationError(f"duplicate vertex id {vid} (line {lineno})")
        rows[vid] = nums[1:7]
        order.append(vid)
    if vehicles is None:
        raise ParseError("missing vehicle header")
    if 0 not in rows:
        raise ParseError("missing depot row (id 0)")
    n = len(rows) - 1
    if sorted(rows) != list(range(n + 1)):
        raise ValidationError("vertex ids must be 0..n without gaps")

    xs = np.array([rows[i][0] for i in range(n + 1)])
    ys = np.array([rows[i][1] for i in range(n + 1)])
    travel = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        for j in range(n + 1):
            if i != j:
                travel[i, j] = truncate_tenth(math.hypot(xs[i] - xs[j], ys[i] - ys[j]))

    demand = np.array([rows[i][2] for i in range(n + 1)])
    ready = [int(rows[i][3]) for i in range(n + 1)]
    due = [int(rows[i][4]) for i in range(n + 1)]
    service = np.array([int(rows[i][5]) for i in range(n + 1)], dtype=np.int64)
    service[0] = 0
    horizon = max(1, due[0])
    tw_early = np.array([max(1, r) for r in ready], dtype=np.int64)
    tw_late = np.array([max(1, d) for d in due], dtype=np.int64)

    det = tuple(
        Request(vertex=v, reveal_epoch=0, arrival_index=idx)
        for idx, v in enumerate(v for v in order if v != 0)
    )
    return Instance(
        horizon=horizon,
        travel=travel,
        demand=demand,
        service=service,
        tw_early=tw_early,
        tw_late=tw_late,
        vehicle_count=vehicles,
        capacity=capacity,
        reveal_prob=np.zeros((horizon + 1, n + 1)),
        deterministic_requests=det,
        name="static",
    )


# ---------------------------------------------------------------------------
# Dynamic benchmark generation


def slice_bounds(horizon: int) -> tuple[int, int]:
    """(end of first slice, end of second slice); no reveals after the second."""
    return horizon // 3, 2 * horizon // 3


def generate_dynamic_instance(base: Instance, profile: ClassProfile, seed: int,
                              horizon: int = 480) -> Instance:
    """Draw one dynamic benchmark instance from ``base`` under ``profile``.

    Each region independently receives a deterministic request (p_initial),
    an early request revealed uniformly in the first slice (p_early), a late
    one in the second slice (p_late), or nothing; the draws are mutually
    exclusive. The reveal-probability matrix spreads each slice probability
    uniformly over the slice's epochs. Pure function of (base, profile, seed).
    """
    if profile.class_id == 5:
        raise UnsupportedClassError(
            "class 5 instances are not generatable (the source files were never available)")
    if profile.class_id not in CLASS_PROFILES:
        raise ValueError(f"unknown class id {profile.class_id}")
    if base.n < 1:
        raise ValidationError("base instance has no customer regions")

    s1, s2 = slice_bounds(horizon)
    rng = np.random.default_rng(seed)
    det: list[int] = []
    reveals: list[tuple[int, int]] = []  # (epoch, vertex)
    for i in range(1, base.n + 1):
        u = rng.random()
        if u < profile.p_initial:
            det.append(i)
        elif u < profile.p_initial + profile.p_early:
            reveals.append((int(rng.integers(1, s1 + 1)), i))
        elif u < profile.p_initial + profile.p_early + profile.p_late:
            reveals.append((int(rng.integers(s1 + 1, s2 + 1)), i))

    reveals.sort()
    arrival: dict[int, int] = {}
    dynamic = []
    for epoch, vertex in reveals:
        idx = arrival.get(epoch, 0)
        arrival[epoch] = idx + 1
        dynamic.append(Request(vertex=vertex, reveal_epoch=epoch, arrival_index=idx))

    prob = np.zeros((horizon + 1, base.n + 1))
    if s1 >= 1:
        prob[1:s1 + 1, 1:] = profile.p_early / s1
    if s2 > s1:
        prob[s1 + 1:s2 + 1, 1:] = profile.p_late / (s2 - s1)

    tw_late = base.tw_late.copy()
    tw_late[0] = horizon
    return Instance(
        horizon=horizon,
        travel=base.travel,
        demand=base.demand,
        service=base.service,
        tw_early=base.tw_early,
        tw_late=tw_late,
        vehicle_count=base.vehicle_count,
        capacity=base.capacity,
        reveal_prob=prob,
        deterministic_requests=tuple(
            Request(vertex=v, reveal_epoch=0, arrival_index=idx)
            for idx, v in enumerate(det)
        ),
        dynamic_requests=tuple(dynamic),
        name=f"{base.name or 'base'}-c{profile.class_id}-s{seed}",
    )


def make_synthetic_base(n: int, seed: int, horizon: int = 120, vehicles: int = 3,
                        capacity: float = 100.0, square: float = 25.0) -> Instance:
    """Random geometric base sized for a given horizon.

    Window centers sit in the band where dynamic reveals (which stop at 2H/3)
    can still be served, with moderate widths, so late requests are usually
    alive but contested; everything stays capped at depot serviceability.
    """
    rng = np.random.default_rng(seed)
    xs = np.empty(n + 1)
    ys = np.empty(n + 1)
    xs[0] = ys[0] = square / 2.0
    xs[1:] = rng.uniform(0.0, square, size=n)
    ys[1:] = rng.uniform(0.0, square, size=n)
    travel = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        for j in range(n + 1):
            if i != j:
                travel[i, j] = truncate_tenth(math.hypot(xs[i] - xs[j], ys[i] - ys[j]))

    service = np.full(n + 1, max(1, horizon // 60), dtype=np.int64)
    service[0] = 0
    demand = np.concatenate(([0.0], rng.uniform(5.0, 15.0, size=n)))
    tw_early = np.ones(n + 1, dtype=np.int64)
    tw_late = np.full(n + 1, horizon, dtype=np.int64)
    for i in range(1, n + 1):
        latest_ok = horizon - int(math.ceil(travel[i, 0])) - int(service[i])
        center = int(rng.integers(int(0.35 * horizon), int(0.85 * horizon) + 1))
        half = int(rng.integers(max(2, int(0.08 * horizon)), max(3, int(0.20 * horizon)) + 1))
        e = max(1, center - half)
        l = min(center + half, latest_ok)
        if l < e:
            e = max(1, l)
        tw_early[i] = e
        tw_late[i] = max(e, l)
    return Instance(
        horizon=horizon,
        travel=travel,
        demand=demand,
        service=service,
        tw_early=tw_early,
        tw_late=tw_late,
        vehicle_count=vehicles,
        capacity=capacity,
        reveal_prob=np.zeros((horizon + 1, n + 1)),
        name=f"syn{n}-{seed}",
    )


# ---------------------------------------------------------------------------
# Two-scenario nonanticipation fixture

# Vertex ids: 0=a (depot), 1=b, 2=c, 3=d, 4=e, 5=f, 6=g, 7=h, 8=i.
# The two equiprobable futures reveal {d,e,f} or {g,h,i} at epoch 4.
NONANTICIPATION_SCENARIOS = (
    ((3, 4), (4, 4), (5, 4)),
    ((6, 4), (7, 4), (8, 4)),
)

TRAVEL_TO_B = 1
TRAVEL_TO_C = 2


def build_nonanticipation_fixture() -> Instance:
    """Nine-vertex single-vehicle instance where committing early to the hub
    that keeps both futures reachable is strictly better under the exact
    multistage evaluation, while the two-stage relaxation prefers the hub
    that could (clairvoyantly) serve everything.

    Drawn arcs cost 2, everything else 20; windows close at 5/7/9 along the
    two reveal chains; service durations are zero so the forced-commitment
    timing works out exactly.
    """
    n = 8
    travel = np.full((n + 1, n + 1), 20.0)
    np.fill_diagonal(travel, 0.0)
    for i, j in ((0, 1), (0, 2), (1, 3), (1, 6), (2, 4), (2, 7),
                 (3, 4), (4, 5), (6, 7), (7, 8)):
        travel[i, j] = 2.0
    horizon = 40
    tw_early = np.ones(n + 1, dtype=np.int64)
    tw_late = np.array([horizon, horizon, horizon, 5, 7, 9, 5, 7, 9], dtype=np.int64)
    return Instance(
        horizon=horizon,
        travel=travel,
        demand=np.array([0.0] + [1.0] * n),
        service=np.zeros(n + 1, dtype=np.int64),
        tw_early=tw_early,
        tw_late=tw_late,
        vehicle_count=1,
        capacity=100.0,
        reveal_prob=np.zeros((horizon + 1, n + 1)),
        name="nonanticipation",
    )


# ---------------------------------------------------------------------------
# Dynamic instance files


def write_dynamic_instance(instance: Instance, target) -> str:
    """Serialize to the sectioned text format; returns the text."""
    buf = io.StringIO()
    w = buf.write
    w("[STATIC]\n")
    w(f"name {instance.name or 'instance'}\n")
    w(f"horizon {instance.horizon}\n")
    w(f"vehicles {instance.vehicle_count}\n")
    w(f"capacity {instance.capacity:.6f}\n")
    w(f"depot {instance.tw_early[0]} {instance.tw_late[0]}\n")
    for i in range(1, instance.n + 1):
        w(f"vertex {i} {instance.demand[i]:.6f} {instance.service[i]} "
          f"{instance.tw_early[i]} {instance.tw_late[i]}\n")
    for i in range(instance.n + 1):
        row = " ".join(f"{t:.6f}" for t in instance.travel[i])
        w(f"trow {i} {row}\n")
    w("[REVEALS]\n")
    for req in instance.all_requests:
        w(f"{req.vertex} {req.reveal_epoch} {req.arrival_index}\n")
    w("[PROBABILITY]\n")
    for i in range(1, instance.n + 1):
        col = instance.reveal_prob[1:, i]
        t = 1
        while t <= instance.horizon:
            p = col[t - 1]
            if p > 0.0:
                end = t
                while end < instance.horizon and col[end] == p:
                    end += 1
                w(f"{t} {end} {i} {p:.12g}\n")
                t = end + 1
            else:
                t += 1
    text = buf.getvalue()
    if hasattr(target, "write"):
        target.write(text)
    elif target is not None:
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def read_dynamic_instance(source) -> Instance:
    """Parse the sectioned dynamic format written by :func:`write_dynamic_instance`."""
    section = None
    name = "instance"
    horizon = None
    vehicles = None
    capacity = None
    depot_tw = (1, None)
    vrows = {}
    trows = {}
    reveal_rows = []
    prob_rows = []
    for lineno, raw in enumerate(_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            section = line
            continue
        parts = line.split()
        try:
            if section == "[STATIC]":
                tag = parts[0]
                if tag == "name":
                    name = parts[1]
                elif tag == "horizon":
                    horizon = int(parts[1])
                elif tag == "vehicles":
                    vehicles = int(parts[1])
                elif tag == "capacity":
                    capacity = float(parts[1])
                elif tag == "depot":
                    depot_tw = (int(parts[1]), int(parts[2]))
                elif tag == "vertex":
                    vrows[int(parts[1])] = (float(parts[2]), int(parts[3]),
                                            int(parts[4]), int(parts[5]))
                elif tag == "trow":
                    trows[int(parts[1])] = [float(p) for p in parts[2:]]
                else:
                    raise ParseError(f"unknown static tag {tag!r}", lineno)
            elif section == "[REVEALS]":
                reveal_rows.append((int(parts[0]), int(parts[1]), int(parts[2])))
            elif section == "[PROBABILITY]":
                prob_rows.append((int(parts[0]), int(parts[1]), int(parts[2]),
                                  float(parts[3])))
            else:
                raise ParseError("content before any section header", lineno)
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(str(exc), lineno) from exc
    if horizon is None or vehicles is None or capacity is None:
        raise ParseError("incomplete [STATIC] section")
    n = len(vrows)
    if sorted(vrows) != list(range(1, n + 1)):
        raise ValidationError("vertex rows must cover 1..n")
    if sorted(trows) != list(range(n + 1)):
        raise ValidationError("travel rows must cover 0..n")
    travel = np.array([trows[i] for i in range(n + 1)])
    demand = np.zeros(n + 1)
    service = np.zeros(n + 1, dtype=np.int64)
    tw_early = np.ones(n + 1, dtype=np.int64)
    tw_late = np.full(n + 1, horizon, dtype=np.int64)
    tw_early[0] = depot_tw[0]
    tw_late[0] = depot_tw[1] if depot_tw[1] is not None else horizon
    for i in range(1, n + 1):
        demand[i], service[i], tw_early[i], tw_late[i] = vrows[i]
    prob = np.zeros((horizon + 1, n + 1))
    for start, end, vertex, p in prob_rows:
        prob[start:end + 1, vertex] = p
    det = []
    dyn = []
    for vertex, epoch, idx in reveal_rows:
        req = Request(vertex=vertex, reveal_epoch=epoch, arrival_index=idx)
        (det if epoch == 0 else dyn).append(req)
    dyn.sort(key=lambda r: (r.reveal_epoch, r.arrival_index))
    return Instance(
        horizon=horizon,
        travel=travel,
        demand=demand,
        service=service,
        tw_early=tw_early,
        tw_late=tw_late,
        vehicle_count=vehicles,
        capacity=capacity,
        reveal_prob=prob,
        deterministic_requests=tuple(det),
        dynamic_requests=tuple(dyn),
        name=name,
    )
