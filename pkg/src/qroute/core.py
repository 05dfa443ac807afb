"""CVRP instances, routes, feasibility validation, and instance file IO.

An instance is a depot plus m customers in the unit square with integer
demands and a single vehicle capacity. A solution is one "giant tour":
a node sequence that starts and ends at the depot and may return to it
in between, each depot-to-depot segment being one vehicle trip. The
number of vehicles is whatever the sequence implies, never fixed ahead
of time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, IncompleteEpisodeError, InvalidRouteError, ParseError

MAX_DEMAND = 9

# Capacity used for each benchmark size when the caller does not pick one.
CAPACITY_TABLE = {20: 30, 50: 40, 100: 50}


def default_capacity(m):
    """Benchmark vehicle capacity for an instance with m customers."""
    if m in CAPACITY_TABLE:
        return CAPACITY_TABLE[m]
    if m <= 20:
        return 30
    if m <= 50:
        return 40
    return 50


@dataclass(frozen=True)
class Instance:
    """A CVRP instance. Index 0 is the depot; indices 1..m are customers.

    coords: (x, y) pairs in the unit square.
    demands: integer demands; demands[0] must be 0.
    capacity: vehicle capacity C.
    """

    coords: tuple
    demands: tuple
    capacity: int

    def __post_init__(self):
        coords = tuple((float(x), float(y)) for x, y in self.coords)
        demands = tuple(int(d) for d in self.demands)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "demands", demands)
        object.__setattr__(self, "capacity", int(self.capacity))
        if len(coords) != len(demands):
            raise ConfigurationError(
                f"coords ({len(coords)}) and demands ({len(demands)}) differ in length"
            )
        if len(coords) < 2:
            raise ConfigurationError("an instance needs at least one customer")
        if demands[0] != 0:
            raise ConfigurationError(f"depot demand must be 0, got {demands[0]}")
        for i, d in enumerate(demands[1:], start=1):
            if d < 1:
                raise ConfigurationError(f"customer {i} has demand {d}; must be >= 1")
            if d > self.capacity:
                raise ConfigurationError(
                    f"customer {i} demand {d} exceeds capacity {self.capacity}"
                )
        if self.capacity < 1:
            raise ConfigurationError(f"capacity must be positive, got {self.capacity}")

    @property
    def m(self):
        """Number of customers."""
        return len(self.coords) - 1

    @property
    def n_nodes(self):
        return len(self.coords)


def distance_matrix(instance):
    """Full pairwise Euclidean distance matrix, shape (m+1, m+1), float64."""
    pts = np.asarray(instance.coords, dtype=np.float64)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


@dataclass(frozen=True)
class Route:
    """A giant-tour solution: node sequence starting and ending at the depot.

    Intermediate zeros are depot returns. The singleton (0,) is the empty
    tour. Consecutive duplicates (zero-length hops) are rejected.
    """

    sequence: tuple

    def __post_init__(self):
        seq = tuple(int(v) for v in self.sequence)
        object.__setattr__(self, "sequence", seq)
        if len(seq) == 0:
            raise InvalidRouteError("empty sequence; the minimal route is (0,)")
        if seq[0] != 0 or seq[-1] != 0:
            raise InvalidRouteError(f"route must start and end at the depot, got {seq[0]}..{seq[-1]}")
        for a, b in zip(seq, seq[1:]):
            if a == b:
                raise InvalidRouteError(f"zero-length hop at node {a}")
        if any(v < 0 for v in seq):
            raise InvalidRouteError("negative node index")

    def segments(self):
        """Depot-to-depot customer segments, in visiting order."""
        segs, cur = [], []
        for v in self.sequence[1:]:
            if v == 0:
                segs.append(tuple(cur))
                cur = []
            else:
                cur.append(v)
        return [s for s in segs if s]


@dataclass(frozen=True)
class Violation:
    """One failed feasibility condition."""

    kind: str  # "index" | "multiplicity" | "capacity"
    message: str
    nodes: tuple = ()


@dataclass(frozen=True)
class SolutionReport:
    length: float
    vehicle_count: int
    feasible: bool
    violations: tuple = ()


def route_length(instance, route):
    """Total Euclidean length of the route.

    Raises InvalidRouteError if the route references nodes the instance
    does not have.
    """
    n = instance.n_nodes
    total = 0.0
    prev = route.sequence[0]
    for v in route.sequence:
        if v >= n:
            raise InvalidRouteError(f"node {v} out of range for instance with {n} nodes")
    for v in route.sequence[1:]:
        total += math.dist(instance.coords[prev], instance.coords[v])
        prev = v
    return total


def validate_solution(instance, route):
    """Check a route against the instance and report every failure.

    Feasible means: every customer visited exactly once, every
    depot-to-depot segment's demand fits the capacity, endpoints at the
    depot. The endpoint condition and the absence of depot-disconnected
    subtours hold structurally for any Route, so only multiplicity,
    capacity, and index range can actually fail here. All failures are
    collected, none raised.
    """
    violations = []
    n = instance.n_nodes
    bad_index = sorted({v for v in route.sequence if v >= n})
    if bad_index:
        violations.append(
            Violation("index", f"nodes {bad_index} out of range (instance has {n} nodes)",
                      tuple(bad_index))
        )
        return SolutionReport(0.0, 0, False, tuple(violations))

    counts = np.zeros(n, dtype=np.int64)
    for v in route.sequence:
        counts[v] += 1
    for i in range(1, n):
        if counts[i] != 1:
            violations.append(
                Violation("multiplicity", f"customer {i} visited {counts[i]} times", (i,))
            )

    segments = route.segments()
    for k, seg in enumerate(segments):
        load = sum(instance.demands[v] for v in seg)
        if load > instance.capacity:
            violations.append(
                Violation("capacity",
                          f"segment {k} carries demand {load} > capacity {instance.capacity}",
                          tuple(seg))
            )

    return SolutionReport(
        length=route_length(instance, route),
        vehicle_count=len(segments),
        feasible=not violations,
        violations=tuple(violations),
    )


def generate_instance(m, capacity, rng):
    """Random instance: coordinates uniform on the unit square, demands
    uniform integers in {1..9}. Deterministic given the generator state."""
    if m < 1:
        raise ConfigurationError(f"need at least one customer, got m={m}")
    if capacity < MAX_DEMAND:
        raise ConfigurationError(
            f"capacity {capacity} < maximum possible demand {MAX_DEMAND}"
        )
    coords = rng.random((m + 1, 2))
    demands = rng.integers(1, MAX_DEMAND + 1, size=m)
    return Instance(
        coords=tuple((float(x), float(y)) for x, y in coords),
        demands=(0,) + tuple(int(d) for d in demands),
        capacity=int(capacity),
    )


def optimality_gap(length, reference_length):
    """Percent excess of length over the reference: 100*(len-ref)/ref."""
    if reference_length <= 0:
        raise ConfigurationError(f"reference length must be positive, got {reference_length}")
    return 100.0 * (length - reference_length) / reference_length


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------
# Instances: one JSON object per line,
#   {"coords": [[x, y], ...], "demands": [...], "capacity": C}
# Solutions: one JSON object per line,
#   {"instance_id": i, "sequence": [...], "length": l}
# Reference lengths: CSV with header instance_id,method,length.


def write_instances(path, instances):
    with open(path, "w") as fh:
        for inst in instances:
            rec = {
                "coords": [[x, y] for x, y in inst.coords],
                "demands": list(inst.demands),
                "capacity": inst.capacity,
            }
            fh.write(json.dumps(rec) + "\n")


def read_instances(path):
    instances = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                inst = Instance(
                    coords=tuple((x, y) for x, y in rec["coords"]),
                    demands=tuple(rec["demands"]),
                    capacity=rec["capacity"],
                )
            except (ValueError, KeyError, TypeError, ConfigurationError) as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            instances.append(inst)
    return instances


def write_solutions(path, records):
    """records: iterable of (instance_id, Route, length)."""
    with open(path, "w") as fh:
        for instance_id, route, length in records:
            rec = {
                "instance_id": int(instance_id),
                "sequence": list(route.sequence),
                "length": float(length),
            }
            fh.write(json.dumps(rec) + "\n")


def read_solutions(path):
    """Returns a list of (instance_id, Route, length)."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append((int(rec["instance_id"]), Route(tuple(rec["sequence"])),
                            float(rec["length"])))
            except (ValueError, KeyError, TypeError, InvalidRouteError) as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    return out


def read_references(path):
    """Read a reference-lengths CSV (instance_id,method,length).

    Returns {instance_id: {method: length}}.
    """
    refs = {}
    with open(path) as fh:
        header = fh.readline()
        if header.strip().split(",")[:3] != ["instance_id", "method", "length"]:
            raise ParseError(f"{path}: line 1: expected header instance_id,method,length")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != 3:
                raise ParseError(f"{path}: line {lineno}: expected 3 fields, got {len(parts)}")
            try:
                iid, method, length = int(parts[0]), parts[1], float(parts[2])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            refs.setdefault(iid, {})[method] = length
    return refs
