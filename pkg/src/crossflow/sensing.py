"""Lane-level sensing: magnetometer arrays, speed pairs, jams, pedestrians.

Each lane carries point sensors every few meters from the stop line
outward.  A sensor reports an occupancy interval per vehicle; a pair of
neighbouring sensors yields a speed estimate from the travel time
between them.  Pedestrian demand comes from a bounded sensing area on
each side of a crossing, and emergency vehicles announce themselves
with a radio beacon naming their approach street.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

JAM_THRESHOLD_S = 60.0


@dataclass(frozen=True)
class DetectionEvent:
    """One occupancy interval of one sensor; exit_s is None while occupied."""

    lane: str
    position_m: float
    enter_s: float
    exit_s: float | None = None

    @property
    def closed(self) -> bool:
        return self.exit_s is not None


def estimate_speed(t_first_s: float, t_second_s: float, spacing_m: float) -> float:
    """Speed from one vehicle seen by two sensors ``spacing_m`` apart.

    ``t_first_s`` is the passage time at the upstream sensor and
    ``t_second_s`` at the downstream one.
    """
    if spacing_m <= 0:
        raise ValueError("sensor spacing must be positive")
    dt = t_second_s - t_first_s
    if dt <= 0:
        raise ValueError("non-causal detection pair")
    return spacing_m / dt


@dataclass
class LaneSensorArray:
    """Sensor positions of one lane plus their live occupancy state.

    ``occupied_since[i]`` holds the enter time of the vehicle currently
    over sensor i, or None when vacant.
    """

    lane: str
    spacing_m: float
    positions: tuple[float, ...]
    occupied_since: list[float | None] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.occupied_since:
            self.occupied_since = [None] * len(self.positions)
        if len(self.occupied_since) != len(self.positions):
            raise ValueError("occupancy state must match the sensor count")
        for a, b in zip(self.positions, self.positions[1:]):
            if b <= a:
                raise ValueError("sensor positions must be strictly increasing")

    def __len__(self) -> int:
        return len(self.positions)

    def slot(self, position_m: float) -> int:
        """Index of the sensor at ``position_m`` exactly."""
        i = round(position_m / self.spacing_m)
        if 0 <= i < len(self.positions) and abs(self.positions[i] - position_m) < 1e-6:
            return i
        raise ValueError(f"no sensor at {position_m} m on lane {self.lane}")

    def set_occupancy(self, detections: list[DetectionEvent], at_s: float) -> None:
        """Load the occupancy snapshot a detection trace implies at ``at_s``."""
        self.occupied_since = [None] * len(self.positions)
        for det in detections:
            if det.lane != self.lane:
                raise ValueError(f"detection for lane {det.lane!r} fed to lane {self.lane!r}")
            if det.enter_s <= at_s and (det.exit_s is None or at_s < det.exit_s):
                self.occupied_since[self.slot(det.position_m)] = det.enter_s


def layout_sensors(lane: str, span_m: float, spacing_m: float) -> LaneSensorArray:
    """Place sensors at 0, spacing, 2*spacing, ... up to the span."""
    if spacing_m <= 0:
        raise ValueError("sensor spacing must be positive")
    if span_m < 0:
        raise ValueError("sensor span cannot be negative")
    count = int(span_m / spacing_m + 1e-9) + 1
    positions = tuple(i * spacing_m for i in range(count))
    return LaneSensorArray(lane=lane, spacing_m=spacing_m, positions=positions)


def detect_jam(array: LaneSensorArray, now_s: float, threshold_s: float = JAM_THRESHOLD_S,
               green_since_s: float = float("-inf")) -> tuple[bool, float | None]:
    """Report a jam on a green lane.

    A jam is a sensor continuously occupied for more than ``threshold_s``
    while the lane's light is green; dwell before the green began does
    not count, so red-light queuing is not a jam.  The caller only
    invokes this while the lane is green.  Returns the flag and the
    position of the jammed sensor closest to the stop line.
    """
    jam_pos = None
    for pos, since in zip(array.positions, array.occupied_since):
        if since is None:
            continue
        dwell = now_s - max(since, green_since_s)
        if dwell > threshold_s:
            jam_pos = pos if jam_pos is None else min(jam_pos, pos)
    return jam_pos is not None, jam_pos


@dataclass
class PedestrianArea:
    """Bounded waiting area on one side of a crossing."""

    crossing: int
    side: str
    capacity: int
    waiting: int = 0

    def __post_init__(self) -> None:
        if self.side not in ("A", "B"):
            raise ValueError("side must be 'A' or 'B'")
        if self.capacity < 0:
            raise ValueError("capacity cannot be negative")
        self.waiting = min(self.waiting, self.capacity)

    def arrive(self, count: int = 1) -> None:
        self.waiting = min(self.waiting + count, self.capacity)

    def clear(self) -> None:
        self.waiting = 0


def pedestrian_wait_count(side_a: PedestrianArea, side_b: PedestrianArea) -> int:
    """Total pedestrians waiting at a crossing, both sides summed.

    Each side saturates at its area capacity before the sum.
    """
    if side_a.crossing != side_b.crossing:
        raise ValueError(f"sides belong to crossings {side_a.crossing} and {side_b.crossing}")
    return min(side_a.waiting, side_a.capacity) + min(side_b.waiting, side_b.capacity)


@dataclass(frozen=True)
class EmergencyBeacon:
    approach: int
    timestamp_s: float


@dataclass(frozen=True)
class ReportingSchedule:
    """Round-robin transmission plan: node k sends at offset k*period/nodes
    within every period, and may additionally be pulled on demand."""

    nodes: int
    period_s: float
    offsets: tuple[float, ...]

    def slot_of(self, node: int) -> float:
        if not 0 <= node < self.nodes:
            raise ValueError(f"node {node} out of range 0..{self.nodes - 1}")
        return self.offsets[node]

    def transmissions(self, until_s: float) -> list[tuple[float, int]]:
        out = []
        cycle = 0
        while True:
            base = cycle * self.period_s
            if base >= until_s:
                break
            for node, off in enumerate(self.offsets):
                t = base + off
                if t < until_s:
                    out.append((t, node))
            cycle += 1
        out.sort()
        return out


def reporting_schedule(nodes: int, period_s: float) -> ReportingSchedule:
    if nodes < 1:
        raise ValueError("need at least one reporting node")
    if period_s <= 0:
        raise ValueError("reporting period must be positive")
    offsets = tuple(k * period_s / nodes for k in range(nodes))
    return ReportingSchedule(nodes=nodes, period_s=period_s, offsets=offsets)


# --- detection trace files ------------------------------------------------

_TRACE_FIELDS = ("lane", "position_m", "enter_s", "exit_s")


def detections_to_csv(detections, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_TRACE_FIELDS)
        for d in detections:
            w.writerow([d.lane, repr(d.position_m), repr(d.enter_s),
                        "" if d.exit_s is None else repr(d.exit_s)])


def detections_from_csv(path) -> list[DetectionEvent]:
    out: list[DetectionEvent] = []
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if tuple(header or ()) != _TRACE_FIELDS:
            raise ValueError(f"{path}: expected header {','.join(_TRACE_FIELDS)}")
        for ln, row in enumerate(r, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{ln}: expected 4 fields")
            lane, pos, enter, exit_ = row
            out.append(DetectionEvent(
                lane=lane, position_m=float(pos), enter_s=float(enter),
                exit_s=None if exit_ == "" else float(exit_)))
    return out
