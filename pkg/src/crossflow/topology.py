"""Crossroad layout, traffic events, and the conflict graph between them.

A crossroad is described by the number of entering and leaving streets and
the number of signalled pedestrian crossings.  Street k hosts both the
entering approach k and the adjacent leaving approach k.  Events are the
things a light can grant: a vehicle movement from one entering street to
one leaving street, or a pedestrian crossing over one street.  Two events
conflict when they cannot safely hold green at the same time; the conflict
graph stores that relation as a symmetric boolean matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum


class TopologyError(ValueError):
    """Raised for an inconsistent crossroad description."""


class GeometryError(TopologyError):
    """Raised when conflicts cannot be derived from the described layout."""


class ConflictMatrixError(ValueError):
    """Raised for a malformed conflict matrix."""


@dataclass(frozen=True)
class CrossroadTopology:
    """Static description of one crossroad.

    ``entering``/``leaving`` count the streets feeding and draining the
    junction; street k is assumed to carry approach k in and approach k
    out on the same leg.  ``crossing_streets`` maps each pedestrian
    crossing (1-based) to the street it spans and defaults to crossing k
    spanning street k.
    """

    entering: int
    leaving: int
    crossings: int = 0
    lanes_per_approach: int = 1
    sensor_span_m: float = 200.0
    sensor_spacing_m: float = 4.0
    crossing_streets: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.entering < 1 or self.leaving < 1:
            raise TopologyError("a crossroad needs at least one entering and one leaving street")
        if self.crossings < 0:
            raise TopologyError("crossing count cannot be negative")
        if self.lanes_per_approach < 1:
            raise TopologyError("lanes_per_approach must be at least 1")
        if self.sensor_span_m < 0:
            raise TopologyError("sensor_span_m cannot be negative")
        if self.sensor_spacing_m <= 0:
            raise TopologyError("sensor_spacing_m must be positive")
        if not self.crossing_streets:
            object.__setattr__(self, "crossing_streets", tuple(range(1, self.crossings + 1)))
        if len(self.crossing_streets) != self.crossings:
            raise TopologyError("crossing_streets must name one street per crossing")
        streets = max(self.entering, self.leaving)
        for k in self.crossing_streets:
            if not 1 <= k <= streets:
                raise TopologyError(f"crossing spans unknown street {k}")


class EventKind(Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"


@dataclass(frozen=True)
class Event:
    """One grantable event, holding its 1-based canonical index."""

    index: int
    kind: EventKind
    in_street: int = 0
    out_street: int = 0
    street: int = 0

    @property
    def label(self) -> str:
        if self.kind is EventKind.VEHICLE:
            return f"IN{self.in_street}OUT{self.out_street}"
        return f"CROSS{self.street}"

    def uses_street(self, k: int) -> bool:
        if self.kind is EventKind.VEHICLE:
            return k in (self.in_street, self.out_street)
        return k == self.street


@dataclass(frozen=True)
class EventSet:
    """Canonically ordered events: vehicle movements sorted by
    (in_street, out_street), then crossings sorted by street."""

    events: tuple[Event, ...]
    _by_label: dict[str, Event] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        for pos, ev in enumerate(self.events, start=1):
            if ev.index != pos:
                raise TopologyError(f"event {ev.label} has index {ev.index}, expected {pos}")
        object.__setattr__(self, "_by_label", {ev.label: ev for ev in self.events})

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(ev.label for ev in self.events)

    def by_index(self, index: int) -> Event:
        if not 1 <= index <= len(self.events):
            raise TopologyError(f"event index {index} out of range 1..{len(self.events)}")
        return self.events[index - 1]

    def by_label(self, label: str) -> Event:
        try:
            return self._by_label[label]
        except KeyError:
            raise TopologyError(f"unknown event label {label!r}") from None

    @property
    def vehicles(self) -> tuple[Event, ...]:
        return tuple(ev for ev in self.events if ev.kind is EventKind.VEHICLE)

    @property
    def pedestrians(self) -> tuple[Event, ...]:
        return tuple(ev for ev in self.events if ev.kind is EventKind.PEDESTRIAN)

    def approach_movements(self, street: int) -> tuple[Event, ...]:
        return tuple(ev for ev in self.vehicles if ev.in_street == street)


def enumerate_events(topology: CrossroadTopology, exclude_u_turns: bool = True) -> EventSet:
    """List every grantable event of the crossroad in canonical order.

    A movement from entering street i to leaving street i is a U-turn and
    is skipped unless ``exclude_u_turns`` is False.
    """
    events: list[Event] = []
    for i in range(1, topology.entering + 1):
        for j in range(1, topology.leaving + 1):
            if exclude_u_turns and i == j:
                continue
            events.append(Event(index=len(events) + 1, kind=EventKind.VEHICLE,
                                in_street=i, out_street=j))
    crossings = sorted(range(1, topology.crossings + 1),
                       key=lambda k: (topology.crossing_streets[k - 1], k))
    for k in crossings:
        events.append(Event(index=len(events) + 1, kind=EventKind.PEDESTRIAN,
                            street=topology.crossing_streets[k - 1]))
    return EventSet(tuple(events))


@dataclass(frozen=True)
class ConflictGraph:
    """Symmetric conflict relation over n events; True means conflict."""

    n: int
    rows: tuple[tuple[bool, ...], ...]

    def __post_init__(self) -> None:
        if len(self.rows) != self.n or any(len(r) != self.n for r in self.rows):
            raise ConflictMatrixError(f"matrix must be {self.n}x{self.n}")
        for i in range(self.n):
            if self.rows[i][i]:
                raise ConflictMatrixError(f"event {i + 1} conflicts with itself")
            for j in range(i + 1, self.n):
                if self.rows[i][j] != self.rows[j][i]:
                    raise ConflictMatrixError(f"cells ({i + 1},{j + 1}) and ({j + 1},{i + 1}) disagree")

    def conflicts(self, i: int, j: int) -> bool:
        """Whether events i and j (1-based) conflict."""
        self._check(i)
        self._check(j)
        return self.rows[i - 1][j - 1]

    def _check(self, i: int) -> None:
        if not 1 <= i <= self.n:
            raise ConflictMatrixError(f"event index {i} out of range 1..{self.n}")


def is_compatible_set(graph: ConflictGraph, events) -> bool:
    """True when no two events in the subset conflict.  Empty set is compatible."""
    idx = sorted(set(events))
    for i in idx:
        graph._check(i)
    for a in range(len(idx)):
        row = graph.rows[idx[a] - 1]
        for b in range(a + 1, len(idx)):
            if row[idx[b] - 1]:
                return False
    return True


_ENUM_LIMIT = 24


def enumerate_maximal_compatible_sets(graph: ConflictGraph) -> list[tuple[int, ...]]:
    """All maximal compatible event sets, sorted, as tuples of 1-based indices.

    Guarded to n <= 24 because the output can grow exponentially.
    """
    n = graph.n
    if n > _ENUM_LIMIT:
        raise ConflictMatrixError(f"refusing to enumerate maximal sets for n={n} > {_ENUM_LIMIT}")
    if n == 0:
        return [()]
    compat = []
    for i in range(n):
        mask = 0
        for j in range(n):
            if j != i and not graph.rows[i][j]:
                mask |= 1 << j
        compat.append(mask)

    out: list[int] = []

    def expand(r: int, p: int, x: int) -> None:
        if p == 0 and x == 0:
            out.append(r)
            return
        # pivot on the candidate covering most of p, lowest index wins ties
        best, best_cover = -1, -1
        pool = p | x
        u = pool
        while u:
            v = (u & -u).bit_length() - 1
            cover = bin(p & compat[v]).count("1")
            if cover > best_cover:
                best, best_cover = v, cover
            u &= u - 1
        cand = p & ~compat[best]
        while cand:
            v = (cand & -cand).bit_length() - 1
            bit = 1 << v
            expand(r | bit, p & compat[v], x & compat[v])
            p &= ~bit
            x |= bit
            cand &= cand - 1

    expand(0, (1 << n) - 1, 0)
    sets = [tuple(i + 1 for i in range(n) if mask >> i & 1) for mask in out]
    sets.sort()
    return sets


# --- geometric derivation -------------------------------------------------
#
# Legs sit at equal angles, numbered clockwise with street 1 pointing up.
# Traffic keeps right, so each leg carries its inbound lane offset to one
# side of the leg axis and its outbound lane to the other.  A movement is
# drawn as the straight center line from its entry point to its exit
# point; two movements conflict when those lines merge (same leaving
# street) or cross.  Movements sharing the entering street only diverge.

_LEG_RADIUS = 10.0
_LANE_OFFSET = 2.5
_EPS = 1e-9


def _leg_axis(i: int, n: int) -> tuple[float, float]:
    a = math.pi / 2 - (i - 1) * 2 * math.pi / n
    return math.cos(a), math.sin(a)


def _entry_point(i: int, n: int) -> tuple[float, float]:
    ux, uy = _leg_axis(i, n)
    # heading into the junction is -u; driver's right of that is (-uy, ux)
    return _LEG_RADIUS * ux - _LANE_OFFSET * uy, _LEG_RADIUS * uy + _LANE_OFFSET * ux


def _exit_point(j: int, n: int) -> tuple[float, float]:
    ux, uy = _leg_axis(j, n)
    # heading out is +u; driver's right of that is (uy, -ux)
    return _LEG_RADIUS * ux + _LANE_OFFSET * uy, _LEG_RADIUS * uy - _LANE_OFFSET * ux


def movement_path(ev: Event, n_legs: int) -> tuple[tuple[float, float], tuple[float, float]]:
    """Center-line segment a vehicle movement follows through the junction."""
    if ev.kind is not EventKind.VEHICLE:
        raise TopologyError("only vehicle movements have a drawn path")
    return _entry_point(ev.in_street, n_legs), _exit_point(ev.out_street, n_legs)


def _orient(ax, ay, bx, by, cx, cy) -> int:
    d = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if d > _EPS:
        return 1
    if d < -_EPS:
        return -1
    return 0


def _on_segment(ax, ay, bx, by, px, py) -> bool:
    return (min(ax, bx) - _EPS <= px <= max(ax, bx) + _EPS
            and min(ay, by) - _EPS <= py <= max(ay, by) + _EPS)


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Whether closed segments p1-p2 and q1-q2 share any point."""
    o1 = _orient(*p1, *p2, *q1)
    o2 = _orient(*p1, *p2, *q2)
    o3 = _orient(*q1, *q2, *p1)
    o4 = _orient(*q1, *q2, *p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_segment(*p1, *p2, *q1):
        return True
    if o2 == 0 and _on_segment(*p1, *p2, *q2):
        return True
    if o3 == 0 and _on_segment(*q1, *q2, *p1):
        return True
    if o4 == 0 and _on_segment(*q1, *q2, *p2):
        return True
    return False


def _movements_conflict(a: Event, b: Event, n_legs: int) -> bool:
    if a.out_street == b.out_street:
        return True  # merge into the same leaving street
    if a.in_street == b.in_street:
        return False  # diverging from a shared approach
    return segments_intersect(*movement_path(a, n_legs), *movement_path(b, n_legs))


def build_conflict_graph(topology: CrossroadTopology, events: EventSet | None = None,
                         exclude_u_turns: bool = True) -> ConflictGraph:
    """Derive the conflict graph from the drawn layout.

    Requires an equal-angle layout, which is only determined when the
    entering and leaving street counts match.  A pedestrian crossing
    conflicts with every movement entering or leaving its street;
    crossings never conflict with each other.
    """
    if topology.entering != topology.leaving:
        raise GeometryError(
            f"geometry underdetermined: {topology.entering} entering vs "
            f"{topology.leaving} leaving streets; provide an explicit conflict matrix")
    if events is None:
        events = enumerate_events(topology, exclude_u_turns)
    n_legs = topology.entering
    evs = list(events)
    n = len(evs)
    rows = [[False] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            a, b = evs[i], evs[j]
            if a.kind is EventKind.VEHICLE and b.kind is EventKind.VEHICLE:
                c = _movements_conflict(a, b, n_legs)
            elif a.kind is EventKind.PEDESTRIAN and b.kind is EventKind.PEDESTRIAN:
                c = False
            else:
                ped, veh = (a, b) if a.kind is EventKind.PEDESTRIAN else (b, a)
                c = veh.uses_street(ped.street)
            rows[i][j] = rows[j][i] = c
    return ConflictGraph(n, tuple(tuple(r) for r in rows))


def load_conflict_matrix(cells, symmetrize: bool = False) -> tuple[ConflictGraph, tuple[tuple[int, int], ...]]:
    """Build a ConflictGraph from a 0/1 matrix.

    With ``symmetrize`` the matrix is OR-ed with its transpose and every
    repaired cell (the side that was 0) is reported; otherwise any
    asymmetry raises, listing the offending cell pairs.  A nonzero
    diagonal always raises.
    """
    m = [list(row) for row in cells]
    n = len(m)
    if any(len(row) != n for row in m):
        raise ConflictMatrixError("conflict matrix must be square")
    for i, row in enumerate(m):
        for j, v in enumerate(row):
            if v not in (0, 1, True, False):
                raise ConflictMatrixError(f"cell ({i + 1},{j + 1}) is {v!r}, expected 0 or 1")
    for i in range(n):
        if m[i][i]:
            raise ConflictMatrixError(f"diagonal cell ({i + 1},{i + 1}) must be 0")
    bad = [(i + 1, j + 1) for i in range(n) for j in range(n)
           if i < j and bool(m[i][j]) != bool(m[j][i])]
    repaired: list[tuple[int, int]] = []
    if bad:
        if not symmetrize:
            cells_txt = ", ".join(f"({i},{j})/({j},{i})" for i, j in bad)
            raise ConflictMatrixError(f"matrix is asymmetric at {cells_txt}")
        for i, j in bad:
            if m[i - 1][j - 1]:
                m[j - 1][i - 1] = 1
                repaired.append((j, i))
            else:
                m[i - 1][j - 1] = 1
                repaired.append((i, j))
    graph = ConflictGraph(n, tuple(tuple(bool(v) for v in row) for row in m))
    return graph, tuple(repaired)


def read_conflict_matrix(path) -> list[list[int]]:
    """Parse the plain-text grid format: first line n, then n rows of n 0/1 digits."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ConflictMatrixError(f"{path}: empty conflict matrix file")
    try:
        n = int(lines[0])
    except ValueError:
        raise ConflictMatrixError(f"{path}:1: expected the matrix size, got {lines[0]!r}") from None
    if len(lines) - 1 != n:
        raise ConflictMatrixError(f"{path}: expected {n} matrix rows, found {len(lines) - 1}")
    out: list[list[int]] = []
    for r, ln in enumerate(lines[1:], start=2):
        toks = ln.split()
        if len(toks) != n:
            raise ConflictMatrixError(f"{path}:{r}: expected {n} cells, found {len(toks)}")
        row = []
        for c, tok in enumerate(toks, start=1):
            if tok not in ("0", "1"):
                raise ConflictMatrixError(f"{path}:{r}: cell {c} is {tok!r}, expected 0 or 1")
            row.append(int(tok))
        out.append(row)
    return out


def write_conflict_matrix(path, graph: ConflictGraph) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{graph.n}\n")
        for row in graph.rows:
            fh.write(" ".join("1" if v else "0" for v in row) + "\n")
