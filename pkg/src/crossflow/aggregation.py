"""Access-point layer: per-lane windowed aggregation and queries.

Raw detections are folded into fixed reporting windows, aggregated
differently under green and red, and kept in an append-only store the
control layer queries with lane and metric filters.  The layer also
estimates queue length from stopped occupancy, raises edge-triggered
congestion events past a queue threshold, and relays emergency beacons.

Counting rules.  Under green a vehicle is counted when it clears the
stop-line sensor; the window's speed is the mean of per-vehicle
estimates from the last sensor pair before the stop line.  Under red a
vehicle is counted when it passes the sensor at the far end of the
array, i.e. when it joins the tail of the queue.  Every window closes
with a queue-length snapshot taken at its end time.
"""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

from .sensing import (
    DetectionEvent,
    EmergencyBeacon,
    LaneSensorArray,
    PedestrianArea,
    layout_sensors,
    pedestrian_wait_count,
)

GREEN = "green"
RED = "red"

_POS_TOL = 1e-6


@dataclass(frozen=True)
class LaneGeometry:
    """Sensor layout of one lane, stop line at position 0."""

    lane: str
    span_m: float = 200.0
    spacing_m: float = 4.0
    stopped_speed_mps: float = 2.0

    def __post_init__(self) -> None:
        if self.span_m < 0:
            raise ValueError("span_m cannot be negative")
        if self.spacing_m <= 0:
            raise ValueError("spacing_m must be positive")
        if self.stopped_speed_mps < 0:
            raise ValueError("stopped_speed_mps cannot be negative")

    def build_array(self) -> LaneSensorArray:
        return layout_sensors(self.lane, self.span_m, self.spacing_m)


@dataclass(frozen=True)
class LaneAggregate:
    """One reporting window of one lane."""

    lane: str
    window_start_s: float
    window_len_s: float
    light: str
    cars_in_window: int
    avg_speed_mps: float | None
    queue_length_m: float

    def __post_init__(self) -> None:
        if self.window_len_s <= 0:
            raise ValueError("window_len_s must be positive")
        if self.light not in (GREEN, RED):
            raise ValueError(f"light must be {GREEN!r} or {RED!r}")
        if self.light == RED and self.avg_speed_mps is not None:
            raise ValueError("red windows carry no speed estimate")
        if self.avg_speed_mps is not None and self.avg_speed_mps < 0:
            raise ValueError("avg_speed_mps cannot be negative")
        if self.cars_in_window < 0 or self.queue_length_m < 0:
            raise ValueError("counts cannot be negative")

    @property
    def window_end_s(self) -> float:
        return self.window_start_s + self.window_len_s


def queue_length(array: LaneSensorArray, now_s: float,
                 stopped_speed_mps: float) -> float:
    """Meters of standing queue, measured from the stop line.

    A sensor counts as stopped when it has been occupied long enough
    that the vehicle on it moves slower than ``stopped_speed_mps``.  The
    queue is the contiguous stopped run starting at the stop line, plus
    one spacing for the vehicle on the farthest sensor of the run.
    """
    if stopped_speed_mps < 0:
        raise ValueError("stopped_speed_mps cannot be negative")
    run = 0
    for since in array.occupied_since:
        if since is None:
            break
        if (now_s - since) * stopped_speed_mps < array.spacing_m:
            break  # occupied but still rolling
        run += 1
    return run * array.spacing_m


def _check_one_lane(detections, lane: str) -> None:
    for d in detections:
        if d.lane != lane:
            raise ValueError(f"detection for lane {d.lane!r} mixed into lane {lane!r}")


def _pair_speeds(detections, geometry: LaneGeometry) -> list[tuple[float, float]]:
    """(stop-line exit time, speed) per vehicle, rank-paired by exit order."""
    at_stop = sorted(d.exit_s for d in detections
                     if d.closed and abs(d.position_m) < _POS_TOL)
    upstream = sorted(d.exit_s for d in detections
                      if d.closed and abs(d.position_m - geometry.spacing_m) < _POS_TOL)
    out = []
    for up, down in zip(upstream, at_stop):
        dt = down - up
        if dt > 0:
            out.append((down, geometry.spacing_m / dt))
    return out


def aggregate_window(detections: list[DetectionEvent], geometry: LaneGeometry,
                     light: str, start_s: float, end_s: float) -> LaneAggregate:
    """Fold a full detection trace into one reporting window.

    ``detections`` is the lane's whole trace; counting is restricted to
    the window but speed pairing and the queue snapshot use all of it.
    """
    if end_s <= start_s:
        raise ValueError("window end must come after its start")
    _check_one_lane(detections, geometry.lane)

    if light == GREEN:
        cars = sum(1 for d in detections
                   if d.closed and abs(d.position_m) < _POS_TOL
                   and start_s <= d.exit_s < end_s)
        speeds = [v for t, v in _pair_speeds(detections, geometry)
                  if start_s <= t < end_s]
        avg = sum(speeds) / len(speeds) if speeds else None
    else:
        cars = sum(1 for d in detections
                   if d.closed and abs(d.position_m - geometry.span_m) < _POS_TOL
                   and start_s <= d.exit_s < end_s)
        avg = None

    array = geometry.build_array()
    array.set_occupancy(detections, end_s)
    queue = queue_length(array, end_s, geometry.stopped_speed_mps)
    return LaneAggregate(lane=geometry.lane, window_start_s=start_s,
                         window_len_s=end_s - start_s, light=light,
                         cars_in_window=cars, avg_speed_mps=avg,
                         queue_length_m=queue)


def replay_windows(detections: list[DetectionEvent], geometry: LaneGeometry,
                   windows) -> list[LaneAggregate]:
    """Aggregate a trace over a gapless window schedule.

    ``windows`` is a sequence of (start_s, end_s, light); consecutive
    windows must tile, i.e. each start equals the previous end.
    """
    out: list[LaneAggregate] = []
    prev_end = None
    for k, (start, end, light) in enumerate(windows):
        if prev_end is not None and start != prev_end:
            raise ValueError(f"window {k} starts at {start}, expected {prev_end}")
        out.append(aggregate_window(detections, geometry, light, start, end))
        prev_end = end
    return out


# --- rendering ------------------------------------------------------------

AGGREGATE_CSV_HEADER = ("time_pattern", "light", "cars", "avg_speed_mps", "queue_m")

_DAY_CS = 24 * 3600 * 100


def clock_pattern(seconds_of_day: float) -> str:
    """Render seconds-of-day as hh:mm:ss.cc, rounded to centiseconds."""
    cs = round(seconds_of_day * 100) % _DAY_CS
    h, rem = divmod(cs, 360000)
    m, rem = divmod(rem, 6000)
    s, c = divmod(rem, 100)
    return f"{h:02d}:{m:02d}:{s:02d}.{c:02d}"


def _fmt(x: float) -> str:
    return f"{round(x, 4):g}"


def aggregate_csv_rows(aggregates, epoch_s: float = 0.0) -> list[tuple[str, ...]]:
    """Render aggregates as CSV cells; each row is stamped at its window end."""
    rows = []
    for a in aggregates:
        rows.append((clock_pattern(epoch_s + a.window_end_s), a.light,
                     str(a.cars_in_window),
                     "" if a.avg_speed_mps is None else _fmt(a.avg_speed_mps),
                     _fmt(a.queue_length_m)))
    return rows


def write_aggregates_csv(aggregates, path, epoch_s: float = 0.0) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_CSV_HEADER)
        w.writerows(aggregate_csv_rows(aggregates, epoch_s))


# --- queries --------------------------------------------------------------

QUERY_METRICS = ("cars", "speed", "queue", "pedestrians")


@dataclass(frozen=True)
class QueryParams:
    """Filter for pulling aggregates: which lanes, which metrics, how many
    recent windows per lane."""

    lanes: tuple[str, ...] | None = None
    metrics: tuple[str, ...] = ("cars", "speed", "queue")
    windows: int = 1

    def __post_init__(self) -> None:
        if self.windows < 1:
            raise ValueError("window count must be at least 1")
        seen = set()
        for m in self.metrics:
            if m not in QUERY_METRICS:
                raise ValueError(f"unknown metric {m!r}")
            if m in seen:
                raise ValueError(f"duplicate metric {m!r}")
            seen.add(m)


def _project(agg: LaneAggregate, metrics: tuple[str, ...]) -> tuple:
    cells = []
    for m in metrics:
        if m == "cars":
            cells.append(agg.cars_in_window)
        elif m == "speed":
            cells.append(agg.avg_speed_mps)
        elif m == "queue":
            cells.append(agg.queue_length_m)
        # "pedestrians" never projects from a lane row
    return tuple(cells)


class AggregateStore:
    """Append-only aggregate history with redundancy-suppressed queries.

    A query returns, per matching lane, the most recent rows not yet
    transmitted under the same filter; a fresh row whose projection onto
    the requested metrics is identical to the last one transmitted for
    that lane is dropped as redundant.
    """

    def __init__(self) -> None:
        self._by_lane: dict[str, list[LaneAggregate]] = {}
        self._order: list[LaneAggregate] = []
        # per (lane, metrics): newest window already considered, and the
        # projection of the last row actually transmitted
        self._mark: dict[tuple, float] = {}
        self._last_sent: dict[tuple, tuple] = {}

    def append(self, agg: LaneAggregate) -> None:
        self._by_lane.setdefault(agg.lane, []).append(agg)
        self._order.append(agg)

    def __len__(self) -> int:
        return len(self._order)

    def rows(self, lane: str | None = None) -> list[LaneAggregate]:
        if lane is None:
            return list(self._order)
        return list(self._by_lane.get(lane, ()))

    def latest(self, lane: str) -> LaneAggregate | None:
        rows = self._by_lane.get(lane)
        return rows[-1] if rows else None

    def select(self, params: QueryParams) -> list[LaneAggregate]:
        """Filter and take the last N rows per lane, without suppression."""
        lanes = sorted(self._by_lane) if params.lanes is None else params.lanes
        picked = []
        for lane in lanes:
            picked.extend(self._by_lane.get(lane, ())[-params.windows:])
        picked.sort(key=lambda a: (a.window_start_s, a.lane))
        return picked

    def answer_query(self, params: QueryParams) -> list[LaneAggregate]:
        out = []
        for agg in self.select(params):
            key = (agg.lane, params.metrics)
            if agg.window_start_s <= self._mark.get(key, float("-inf")):
                continue  # already considered by an earlier query
            self._mark[key] = agg.window_start_s
            proj = _project(agg, params.metrics)
            if self._last_sent.get(key) == proj:
                continue  # unchanged since last transmission
            self._last_sent[key] = proj
            out.append(agg)
        return out


# --- congestion events ----------------------------------------------------


@dataclass(frozen=True)
class CongestionEvent:
    """Queue crossed the congestion threshold (rising edge)."""

    lane: str
    timestamp_s: float
    queue_length_m: float
    threshold_m: float

    def __post_init__(self) -> None:
        if self.queue_length_m <= self.threshold_m:
            raise ValueError("congestion event needs queue above threshold")


class CongestionMonitor:
    """Edge-triggered congestion watcher over a stream of aggregates."""

    def __init__(self, threshold_m: float) -> None:
        if threshold_m <= 0:
            raise ValueError("congestion threshold must be positive")
        self.threshold_m = threshold_m
        self._above: dict[str, bool] = {}

    def observe(self, agg: LaneAggregate) -> CongestionEvent | None:
        exceeding = agg.queue_length_m > self.threshold_m
        was = self._above.get(agg.lane, False)
        self._above[agg.lane] = exceeding
        if exceeding and not was:
            return CongestionEvent(lane=agg.lane, timestamp_s=agg.window_end_s,
                                   queue_length_m=agg.queue_length_m,
                                   threshold_m=self.threshold_m)
        return None


def emit_congestion_events(aggregates, threshold_m: float) -> list[CongestionEvent]:
    """One event per rising edge of queue length past the threshold."""
    monitor = CongestionMonitor(threshold_m)
    out = []
    for agg in aggregates:
        ev = monitor.observe(agg)
        if ev is not None:
            out.append(ev)
    return out


# --- control-facing demand snapshot ---------------------------------------


@dataclass(frozen=True)
class EventDemand:
    """Demand the access point sees for one grantable event."""

    queue_m: float = 0.0
    waiting: float = 0.0
    requested: bool = False


@dataclass(frozen=True)
class DemandSnapshot:
    at_s: float
    demand: tuple[EventDemand, ...]
    beacons: tuple[EmergencyBeacon, ...] = ()


@dataclass
class _LanePairing:
    upstream: deque = field(default_factory=deque)
    at_stop: deque = field(default_factory=deque)


class AccessPoint:
    """Aggregation actor for one crossroad.

    Consumes per-window sensor batches lane by lane, keeps the aggregate
    store and pedestrian tallies, forwards emergency beacons, and builds
    the per-event demand snapshot the controller reads.  Speed pairs are
    matched across window boundaries, so feeding the same trace window
    by window gives the same aggregates as one offline replay.
    """

    def __init__(self, geometries, lane_of_street: dict[int, str],
                 crossings: dict[int, int] | None = None,
                 pedestrian_capacity: int = 30,
                 vehicle_footprint_m: float = 5.0,
                 congestion_threshold_m: float | None = None) -> None:
        self.geometries: dict[str, LaneGeometry] = {g.lane: g for g in geometries}
        self.lane_of_street = dict(lane_of_street)
        for street, lane in self.lane_of_street.items():
            if lane not in self.geometries:
                raise ValueError(f"street {street} maps to unknown lane {lane!r}")
        self.store = AggregateStore()
        self.vehicle_footprint_m = vehicle_footprint_m
        self.ped_areas: dict[int, tuple[PedestrianArea, PedestrianArea]] = {}
        self._street_of_crossing = dict(crossings or {})
        for cid, street in self._street_of_crossing.items():
            self.ped_areas[cid] = (
                PedestrianArea(crossing=cid, side="A", capacity=pedestrian_capacity),
                PedestrianArea(crossing=cid, side="B", capacity=pedestrian_capacity))
        self._beacons: list[EmergencyBeacon] = []
        self._pairing: dict[str, _LanePairing] = {}
        self.monitor = (CongestionMonitor(congestion_threshold_m)
                        if congestion_threshold_m else None)
        self.congestion_log: list[CongestionEvent] = []

    # -- sensor side

    def ingest_window(self, lane: str, closed_detections, occupancy: LaneSensorArray,
                      light: str, start_s: float, end_s: float) -> LaneAggregate:
        """Fold one window's newly closed detections into an aggregate.

        ``closed_detections`` are the lane's detections whose exit fell in
        [start_s, end_s); ``occupancy`` is the live sensor state at end_s.
        """
        geom = self.geometries[lane]
        _check_one_lane(closed_detections, lane)
        pairing = self._pairing.setdefault(lane, _LanePairing())

        stop_exits = 0
        for d in sorted(closed_detections, key=lambda d: d.exit_s):
            if not d.closed or not start_s <= d.exit_s < end_s:
                raise ValueError("ingest_window expects detections closed in the window")
            if abs(d.position_m) < _POS_TOL:
                stop_exits += 1
                pairing.at_stop.append(d.exit_s)
            elif abs(d.position_m - geom.spacing_m) < _POS_TOL:
                pairing.upstream.append(d.exit_s)

        speeds = []
        while pairing.upstream and pairing.at_stop:
            up = pairing.upstream.popleft()
            down = pairing.at_stop.popleft()
            if down - up > 0 and start_s <= down < end_s:
                speeds.append(geom.spacing_m / (down - up))

        if light == GREEN:
            cars = stop_exits
            avg = sum(speeds) / len(speeds) if speeds else None
        else:
            cars = sum(1 for d in closed_detections
                       if abs(d.position_m - geom.span_m) < _POS_TOL)
            avg = None

        queue = queue_length(occupancy, end_s, geom.stopped_speed_mps)
        agg = LaneAggregate(lane=lane, window_start_s=start_s,
                            window_len_s=end_s - start_s, light=light,
                            cars_in_window=cars, avg_speed_mps=avg,
                            queue_length_m=queue)
        self.store.append(agg)
        if self.monitor is not None:
            ev = self.monitor.observe(agg)
            if ev is not None:
                self.congestion_log.append(ev)
        return agg

    # -- pedestrian side

    def pedestrian_arrive(self, crossing: int, side: str, count: int = 1) -> None:
        a, b = self.ped_areas[crossing]
        (a if side == "A" else b).arrive(count)

    def pedestrians_served(self, crossing: int) -> None:
        a, b = self.ped_areas[crossing]
        a.clear()
        b.clear()

    def pedestrian_waiting(self, crossing: int) -> int:
        a, b = self.ped_areas[crossing]
        return pedestrian_wait_count(a, b)

    # -- emergency side

    def notify_beacon(self, beacon: EmergencyBeacon) -> None:
        self._beacons.append(beacon)

    def clear_beacons(self) -> None:
        self._beacons.clear()

    # -- control side

    def control_snapshot(self, events, at_s: float) -> DemandSnapshot:
        """Per-event demand for the controller, in event-index order."""
        from .topology import EventKind

        demand = []
        for ev in events:
            if ev.kind is EventKind.VEHICLE:
                lane = self.lane_of_street.get(ev.in_street)
                latest = self.store.latest(lane) if lane else None
                queue = latest.queue_length_m if latest else 0.0
                waiting = queue / self.vehicle_footprint_m
                demand.append(EventDemand(queue_m=queue, waiting=waiting,
                                          requested=queue > 0))
            else:
                crossing = next((cid for cid, street in self._street_of_crossing.items()
                                 if street == ev.street), None)
                waiting = self.pedestrian_waiting(crossing) if crossing is not None else 0
                demand.append(EventDemand(queue_m=0.0, waiting=float(waiting),
                                          requested=waiting > 0))
        return DemandSnapshot(at_s=at_s, demand=tuple(demand),
                              beacons=tuple(self._beacons))
