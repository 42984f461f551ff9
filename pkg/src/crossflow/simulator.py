"""Deterministic fixed-tick microsimulation of one controlled crossroad.

The loop closes all three layers: seeded Poisson demand feeds per-street
lanes, vehicles keep gaps and queue at the stop line, point sensors
report interpolated occupancy intervals, the access point aggregates
them window by window, and either the adaptive controller or a
fixed-time phase plan drives the lights.  Identical config and seed
reproduce the run byte for byte.

Vehicles travel a single instrumented approach lane per entering
street; position is meters upstream of the stop line.  On green a queue
discharges with startup lost time then one vehicle per saturation
headway; free-flowing vehicles that never stopped cross unthrottled.
During the countdown lead before any switch no vehicle may newly cross
the stop line.
"""
from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field, replace

from .aggregation import AccessPoint, LaneGeometry
from .control import (
    ControllerConfig,
    DecisionLoop,
    FitnessWeights,
)
from .sensing import DetectionEvent, EmergencyBeacon, LaneSensorArray
from .topology import (
    CrossroadTopology,
    EventKind,
    build_conflict_graph,
    enumerate_events,
    is_compatible_set,
)


class SimulationError(RuntimeError):
    """A mid-run invariant broke; the message carries the diagnostic."""


@dataclass(frozen=True)
class DemandProfile:
    """Arrival intensities, keyed by movement label and crossing number."""

    vehicle_rates: dict = field(default_factory=dict)
    pedestrian_rates: dict = field(default_factory=dict)
    emergencies: tuple[EmergencyBeacon, ...] = ()
    desired_speed_mps: float = 13.9

    def __post_init__(self) -> None:
        for label, rate in self.vehicle_rates.items():
            if rate < 0:
                raise ValueError(f"negative arrival rate for {label}")
        for k, rate in self.pedestrian_rates.items():
            if rate < 0:
                raise ValueError(f"negative pedestrian rate for crossing {k}")
        if self.desired_speed_mps <= 0:
            raise ValueError("desired_speed_mps must be positive")


@dataclass
class VehicleAgent:
    vid: int
    movement: int
    lane: str
    desired_speed: float
    length: float
    position_m: float
    arrived_s: float
    was_queued: bool = False
    departed_s: float | None = None
    covered: tuple[int, int] | None = None

    @property
    def departed(self) -> bool:
        return self.departed_s is not None


@dataclass(frozen=True)
class SimConfig:
    topology: CrossroadTopology
    demand: DemandProfile
    seed: int
    controller: ControllerConfig = ControllerConfig()
    weights: FitnessWeights = FitnessWeights()
    tick_s: float = 0.1
    duration_s: float = 600.0
    window_s: float = 5.0
    radio_drop_prob: float = 0.0
    control: str = "adaptive"
    fixed_green_s: float = 30.0
    fixed_phases: tuple[frozenset, ...] | None = None
    vehicle_length_m: float = 5.0
    min_gap_m: float = 1.0
    startup_lost_s: float = 2.0
    saturation_headway_s: float = 2.0
    stopped_speed_mps: float = 2.0
    pedestrian_speed_mps: float = 1.2
    crossing_width_m: float = 7.0
    congestion_threshold_m: float = 100.0

    def __post_init__(self) -> None:
        if self.tick_s <= 0:
            raise ValueError("tick_s must be positive")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.window_s <= 0:
            raise ValueError("window_s must be positive")
        if not 0 <= self.radio_drop_prob < 1:
            raise ValueError("radio_drop_prob must lie in [0, 1)")
        if self.control not in ("adaptive", "fixed"):
            raise ValueError(f"unknown control mode {self.control!r}")
        if self.fixed_green_s <= 0:
            raise ValueError("fixed_green_s must be positive")
        if self.vehicle_length_m <= 0 or self.min_gap_m < 0:
            raise ValueError("bad vehicle dimensions")
        if self.startup_lost_s < 0 or self.saturation_headway_s <= 0:
            raise ValueError("bad discharge parameters")


@dataclass(frozen=True)
class SimMetrics:
    duration_s: float
    arrivals: int
    throughput: int
    avg_intersection_speed_mps: float
    mean_wait_s: float
    max_wait_s: float
    per_event_mean_wait_s: tuple
    per_event_max_wait_s: tuple
    max_queue_m_by_lane: tuple
    pedestrians_served: int
    pedestrian_mean_wait_s: float
    max_requested_red_wait_s: tuple
    green_grants: tuple
    max_green_gap_s: tuple

    def __post_init__(self) -> None:
        if self.throughput > self.arrivals:
            raise ValueError("throughput cannot exceed arrivals")
        if self.throughput < 0 or self.arrivals < 0:
            raise ValueError("counts cannot be negative")


@dataclass
class SimResult:
    config: SimConfig
    metrics: SimMetrics
    event_log: list
    decisions: list  # (clock_s, labels ";"-joined, duration_s, trigger)
    lane_traces: dict
    access_point: AccessPoint
    labels: tuple


def discharge_allowance(green_elapsed_s: float, startup_lost_s: float = 2.0,
                        headway_s: float = 2.0) -> int:
    """Vehicles a queue may have released after this much green."""
    if green_elapsed_s <= startup_lost_s:
        return 0
    return int((green_elapsed_s - startup_lost_s) / headway_s + 1e-9)


def discharge_model(queue, green_elapsed_s: float, startup_lost_s: float = 2.0,
                    headway_s: float = 2.0, already_discharged: int = 0):
    """Prefix of the queue allowed through by the discharge law."""
    n = discharge_allowance(green_elapsed_s, startup_lost_s, headway_s)
    return list(queue[:max(0, n - already_discharged)])


def two_phase_plan(events, graph) -> tuple[frozenset, frozenset]:
    """Classic opposing-pairs fixed plan: odd streets, then even streets.

    Within each group movements join greedily in through, right, left
    order, so the protected lefts that cut the opposing through stay
    out.  Works for any even leg count; odd layouts get whatever fits.
    """
    streets = sorted({ev.in_street for ev in events.vehicles})
    n_legs = max(streets) if streets else 0

    def turn_rank(ev):
        # clockwise leg numbering: right turn exits one leg clockwise,
        # through goes opposite; everything else counts as left-ish
        right = (ev.in_street - 2) % n_legs + 1
        through = (ev.in_street + n_legs // 2 - 1) % n_legs + 1
        if ev.out_street == through:
            return 0
        if ev.out_street == right:
            return 1
        return 2

    phases = []
    for parity in (1, 0):
        group = [ev for ev in events.vehicles if ev.in_street % 2 == parity]
        group.sort(key=lambda ev: (turn_rank(ev), ev.index))
        chosen: list[int] = []
        for ev in group:
            if all(not graph.conflicts(ev.index, j) for j in chosen):
                chosen.append(ev.index)
        phases.append(frozenset(chosen))
    return phases[0], phases[1]


# --- internal lane model ---------------------------------------------------


class _Lane:
    def __init__(self, geometry: LaneGeometry, window_s: float):
        self.geometry = geometry
        self.lane_id = geometry.lane
        self.n_slots = int(geometry.span_m / geometry.spacing_m + 1e-9) + 1
        self.positions = tuple(i * geometry.spacing_m for i in range(self.n_slots))
        self.vehicles: list[VehicleAgent] = []
        self.pending: deque = deque()  # (draw_s, movement_index)
        self.open_since: list = [None] * self.n_slots
        self.trace: list[DetectionEvent] = []
        self.pending_closed: list[DetectionEvent] = []
        self.window_start = 0.0
        self.window_light = "red"
        self.next_cut = window_s
        self.green = False
        self.green_started = 0.0
        self.discharged = 0
        self.max_queue_m = 0.0

    def covered_slots(self, front: float, length: float):
        sp = self.geometry.spacing_m
        lo = max(0, math.ceil((front - 1e-9) / sp))
        hi = min(self.n_slots - 1, math.floor((front + length + 1e-9) / sp))
        if lo > hi:
            return None
        return lo, hi

    def occupancy_array(self) -> LaneSensorArray:
        return LaneSensorArray(lane=self.lane_id, spacing_m=self.geometry.spacing_m,
                               positions=self.positions,
                               occupied_since=list(self.open_since))


class _Sim:
    """One run's worth of mutable state; ``run`` drives it tick by tick."""

    def __init__(self, config: SimConfig):
        self.cfg = config
        self.events = enumerate_events(config.topology)
        self.graph = build_conflict_graph(config.topology, self.events)
        self.n = len(self.events)
        self.labels = self.events.labels
        self.by_label = {lbl: self.events.by_label(lbl) for lbl in self.labels}

        for label in config.demand.vehicle_rates:
            if label not in self.by_label:
                raise ValueError(f"demand names unknown movement {label!r}")
        for k in config.demand.pedestrian_rates:
            if not any(ev.kind is EventKind.PEDESTRIAN and ev.street ==
                       config.topology.crossing_streets[k - 1]
                       for ev in self.events):
                raise ValueError(f"demand names unknown crossing {k}")

        topo = config.topology
        self.lanes: dict[str, _Lane] = {}
        self.lane_of_street: dict[int, str] = {}
        for i in range(1, topo.entering + 1):
            geom = LaneGeometry(lane=f"S{i}", span_m=topo.sensor_span_m,
                                spacing_m=topo.sensor_spacing_m,
                                stopped_speed_mps=config.stopped_speed_mps)
            self.lanes[f"S{i}"] = _Lane(geom, config.window_s)
            self.lane_of_street[i] = f"S{i}"
        self.lane_of_movement = {
            ev.index: self.lane_of_street[ev.in_street]
            for ev in self.events.vehicles}

        crossings = {k: topo.crossing_streets[k - 1]
                     for k in range(1, topo.crossings + 1)}
        self.ap = AccessPoint([lane.geometry for lane in self.lanes.values()],
                              self.lane_of_street, crossings=crossings,
                              congestion_threshold_m=config.congestion_threshold_m)
        self.crossing_of_event = {
            ev.index: next(k for k, street in crossings.items()
                           if street == ev.street)
            for ev in self.events.pedestrians}

        seed = config.seed
        self.rng_radio = random.Random(f"{seed}/radio")
        self.rng_split = random.Random(f"{seed}/ped-side")
        self.arrival_rngs = {
            label: random.Random(f"{seed}/arrivals/{label}")
            for label in sorted(config.demand.vehicle_rates)}
        self.ped_rngs = {
            k: random.Random(f"{seed}/pedestrians/{k}")
            for k in sorted(config.demand.pedestrian_rates)}
        self.next_arrival = {
            label: self._draw_gap(label, 0.0)
            for label in sorted(config.demand.vehicle_rates)}
        self.next_ped = {
            k: self._draw_ped_gap(k, 0.0)
            for k in sorted(config.demand.pedestrian_rates)}

        self.current_green: frozenset = frozenset()
        self.green_start_of_event: dict[int, float] = {}
        self.loop: DecisionLoop | None = None
        self.fixed_phases: tuple = ()
        self.fixed_index = 0
        self.next_fixed_switch = math.inf
        if config.control == "adaptive":
            self.loop = DecisionLoop(
                self.graph, self.events, config.controller, config.weights,
                endpoint=lambda now: self.ap.control_snapshot(self.events, now))
        else:
            if config.fixed_phases is not None:
                self.fixed_phases = tuple(frozenset(p) for p in config.fixed_phases)
            else:
                self.fixed_phases = two_phase_plan(self.events, self.graph)

        self.event_log: list = []
        self.decisions: list = []
        self.vid = 0
        self.drawn = [0] * self.n
        self.departed_count = [0] * self.n
        self.delays: dict[int, list] = {i: [] for i in range(1, self.n + 1)}
        self.ped_pending: dict[int, list] = {k: [] for k in crossings}
        self.ped_waits: list = []
        self.fired_beacons: set = set()
        self.acc_red_wait = [0.0] * self.n
        self.max_red_wait = [0.0] * self.n
        self.grants = [0] * self.n
        self.last_green_start = [0.0] * self.n
        self.max_green_gap = [0.0] * self.n
        self.departures_total = 0
        self.speed_sum = 0.0

    # -- seeded demand streams

    def _draw_gap(self, label: str, t: float) -> float:
        rate = self.cfg.demand.vehicle_rates[label]
        if rate <= 0:
            return math.inf
        return t + self.arrival_rngs[label].expovariate(rate)

    def _draw_ped_gap(self, k: int, t: float) -> float:
        rate = self.cfg.demand.pedestrian_rates[k]
        if rate <= 0:
            return math.inf
        return t + self.ped_rngs[k].expovariate(rate)

    # -- logging

    def log(self, tick: int, entity: str, event: str, detail: str) -> None:
        self.event_log.append((tick, entity, event, detail))

    # -- lights

    def _apply_green_set(self, green: frozenset, now: float, tick: int,
                         duration: float, trigger: str) -> None:
        if not is_compatible_set(self.graph, green):
            raise SimulationError(
                f"incompatible green set {sorted(green)} applied at {now:.1f}s")
        names = ";".join(self.labels[i - 1] for i in sorted(green))
        self.log(tick, "lights", "switch", f"{names} dur={duration:.1f} trigger={trigger}")
        self.decisions.append((f"{now:.1f}", names, f"{duration:.1f}", trigger))

        for i in green - self.current_green:
            self.grants[i - 1] += 1
            gap = now - self.last_green_start[i - 1]
            if gap > self.max_green_gap[i - 1]:
                self.max_green_gap[i - 1] = gap
            self.last_green_start[i - 1] = now
            self.green_start_of_event[i] = now
        for i in self.current_green - green:
            self.green_start_of_event.pop(i, None)

        prev = self.current_green
        self.current_green = green
        for street, lane_id in self.lane_of_street.items():
            lane = self.lanes[lane_id]
            was_green = lane.green
            lane.green = any(ev.index in green
                             for ev in self.events.approach_movements(street))
            if lane.green != was_green:
                self._cut_window(lane, now)
                if lane.green:
                    lane.green_started = now
                    lane.discharged = 0
        if trigger == "emergency":
            self.ap.clear_beacons()
            self.log(tick, "emergency", "served", "beacons cleared")
        _ = prev

    # -- aggregation windows

    def _cut_window(self, lane: _Lane, cut_t: float) -> None:
        if cut_t > lane.window_start:
            batch = [d for d in lane.pending_closed if d.exit_s < cut_t]
            rest = [d for d in lane.pending_closed if d.exit_s >= cut_t]
            drop = self.cfg.radio_drop_prob
            if drop and self.rng_radio.random() < drop:
                pass  # the radio hop lost this window's report
            else:
                before = len(self.ap.congestion_log)
                agg = self.ap.ingest_window(lane.lane_id, batch,
                                            lane.occupancy_array(),
                                            lane.window_light,
                                            lane.window_start, cut_t)
                if agg.queue_length_m > lane.max_queue_m:
                    lane.max_queue_m = agg.queue_length_m
                for ev in self.ap.congestion_log[before:]:
                    self.log(int(round(cut_t / self.cfg.tick_s)), "ap", "congestion",
                             f"{ev.lane} queue={ev.queue_length_m:.0f}m")
            lane.pending_closed = rest
            lane.window_start = cut_t
        lane.window_light = "green" if lane.green else "red"
        lane.next_cut = lane.window_start + self.cfg.window_s

    # -- sensors

    def _sensor_diffs(self, lane: _Lane, v: VehicleAgent, new_pos: float,
                      t_prev: float, dt: float) -> None:
        old = v.covered
        new = lane.covered_slots(new_pos, v.length)
        if old == new and old is not None:
            return
        old_lo, old_hi = old if old else (0, -1)
        new_lo, new_hi = new if new else (0, -1)

        front_old, front_new = v.position_m, new_pos
        back_old, back_new = front_old + v.length, front_new + v.length
        sp = lane.geometry.spacing_m

        # back slid past these sensors: close their detections
        for j in range(max(new_hi + 1, old_lo), old_hi + 1):
            s = j * sp
            if back_old > back_new:
                frac = (back_old - s) / (back_old - back_new)
            else:
                frac = 1.0
            t_exit = t_prev + min(max(frac, 0.0), 1.0) * dt
            since = lane.open_since[j]
            if since is not None:
                det = DetectionEvent(lane.lane_id, s, since, t_exit)
                lane.trace.append(det)
                lane.pending_closed.append(det)
                lane.open_since[j] = None
        # front reached these sensors: open detections
        for j in range(new_lo, min(old_lo - 1, new_hi) + 1):
            s = j * sp
            if front_old > front_new:
                frac = (front_old - s) / (front_old - front_new)
            else:
                frac = 1.0
            t_enter = t_prev + min(max(frac, 0.0), 1.0) * dt
            lane.open_since[j] = t_enter
        v.covered = new

    def _open_initial_coverage(self, lane: _Lane, v: VehicleAgent,
                               draw_s: float) -> None:
        v.covered = lane.covered_slots(v.position_m, v.length)
        if v.covered is None:
            return
        sp = lane.geometry.spacing_m
        for j in range(v.covered[0], v.covered[1] + 1):
            t_enter = draw_s + max(0.0, (lane.geometry.span_m - j * sp)
                                   / v.desired_speed)
            lane.open_since[j] = min(t_enter, draw_s + self.cfg.tick_s)

    # -- vehicles

    def _spawn(self, now: float, tick: int) -> None:
        cfg = self.cfg
        for label in self.next_arrival:
            while self.next_arrival[label] <= now:
                draw = self.next_arrival[label]
                ev = self.by_label[label]
                self.drawn[ev.index - 1] += 1
                lane = self.lanes[self.lane_of_movement[ev.index]]
                lane.pending.append((draw, ev.index))
                self.next_arrival[label] = self._draw_gap(label, draw)
        for lane in self.lanes.values():
            while lane.pending:
                draw, movement = lane.pending[0]
                free_from = cfg.topology.sensor_span_m
                live = [v for v in lane.vehicles if not v.departed or
                        v.position_m + v.length > 0]
                if live:
                    tail = max(v.position_m for v in live)
                    free_from = tail + cfg.vehicle_length_m + cfg.min_gap_m
                    # tail is a front position; entering vehicle must fit
                    # wholly upstream of it
                if free_from > cfg.topology.sensor_span_m:
                    break  # no room at the lane entrance yet
                pos = max(cfg.topology.sensor_span_m
                          - cfg.demand.desired_speed_mps * (now - draw),
                          free_from)
                lane.pending.popleft()
                self.vid += 1
                v = VehicleAgent(vid=self.vid, movement=movement,
                                 lane=lane.lane_id,
                                 desired_speed=cfg.demand.desired_speed_mps,
                                 length=cfg.vehicle_length_m, position_m=pos,
                                 arrived_s=draw)
                lane.vehicles.append(v)
                self._open_initial_coverage(lane, v, draw)
                self.log(tick, f"veh{v.vid}", "arrive",
                         f"{lane.lane_id} {self.labels[movement - 1]}")

    def _frozen(self, now: float) -> bool:
        if self.loop is not None:
            pending = self.loop.pending_switch
            if pending is None:
                return False
            _, switch_at = pending
            return now > switch_at - self.cfg.controller.countdown_lead_s - 1e-9
        if not math.isfinite(self.next_fixed_switch):
            return False
        return now > self.next_fixed_switch - self.cfg.controller.countdown_lead_s - 1e-9

    def _move(self, now: float, tick: int) -> None:
        cfg = self.cfg
        dt = cfg.tick_s
        t_prev = now - dt
        frozen = self._frozen(now)
        for lane in self.lanes.values():
            allowance = 0
            if lane.green:
                allowance = discharge_allowance(now - lane.green_started,
                                                cfg.startup_lost_s,
                                                cfg.saturation_headway_s)
            lane.vehicles.sort(key=lambda v: v.position_m)
            leader: VehicleAgent | None = None
            leader_pos = -math.inf
            for v in lane.vehicles:
                target = v.position_m - v.desired_speed * dt
                if leader is not None:
                    target = max(target,
                                 leader_pos + leader.length + cfg.min_gap_m)
                if not v.departed and target <= 0.0 < v.position_m + 1e-12:
                    allowed = (not frozen
                               and v.movement in self.current_green
                               and (not v.was_queued
                                    or lane.discharged < allowance))
                    if allowed:
                        speed = (v.position_m - target) / dt
                        t_cross = t_prev + v.position_m / speed if speed > 0 else now
                        self._depart(lane, v, t_cross, tick)
                    else:
                        target = 0.0
                if not v.departed and target >= v.position_m - 1e-12 \
                        and v.position_m > 0:
                    v.was_queued = True
                    target = min(target, v.position_m)
                self._sensor_diffs(lane, v, target, t_prev, dt)
                v.position_m = target
                leader, leader_pos = v, target
            lane.vehicles = [v for v in lane.vehicles
                             if v.covered is not None or not v.departed]

    def _depart(self, lane: _Lane, v: VehicleAgent, t_cross: float,
                tick: int) -> None:
        if v.movement not in self.current_green:
            raise SimulationError(
                f"vehicle {v.vid} crossed on red for {self.labels[v.movement - 1]}")
        v.departed_s = t_cross
        if v.was_queued:
            lane.discharged += 1
        self.departed_count[v.movement - 1] += 1
        self.departures_total += 1
        span = self.cfg.topology.sensor_span_m
        travel = t_cross - v.arrived_s
        if travel <= 0:
            raise SimulationError(f"vehicle {v.vid} departed before arriving")
        self.speed_sum += span / travel
        delay = max(0.0, travel - span / v.desired_speed)
        self.delays[v.movement].append(delay)
        self.log(tick, f"veh{v.vid}", "depart",
                 f"{lane.lane_id} {self.labels[v.movement - 1]} "
                 f"travel={travel:.1f}s")

    # -- pedestrians

    def _pedestrians(self, now: float, tick: int) -> None:
        cfg = self.cfg
        for k in self.next_ped:
            while self.next_ped[k] <= now:
                draw = self.next_ped[k]
                side = "A" if self.rng_split.random() < 0.5 else "B"
                self.ap.pedestrian_arrive(k, side)
                self.ped_pending[k].append(draw)
                self.log(tick, f"cross{k}", "arrive", f"side={side}")
                self.next_ped[k] = self._draw_ped_gap(k, draw)
        crossing_time = cfg.crossing_width_m / cfg.pedestrian_speed_mps
        for ev in self.events.pedestrians:
            k = self.crossing_of_event[ev.index]
            if ev.index not in self.current_green or not self.ped_pending[k]:
                continue
            start = self.green_start_of_event[ev.index]
            if now < start + crossing_time:
                continue
            served = len(self.ped_pending[k])
            for arr in self.ped_pending[k]:
                self.ped_waits.append(max(0.0, start - arr))
            self.ped_pending[k].clear()
            self.ap.pedestrians_served(k)
            self.log(tick, f"cross{k}", "served", f"n={served}")

    # -- bookkeeping

    def _requested_now(self, i: int) -> bool:
        ev = self.events.by_index(i)
        if ev.kind is EventKind.VEHICLE:
            return self.drawn[i - 1] > self.departed_count[i - 1]
        return bool(self.ped_pending[self.crossing_of_event[i]])

    def _update_fairness(self, dt: float) -> None:
        for i in range(1, self.n + 1):
            if i in self.current_green:
                self.acc_red_wait[i - 1] = 0.0
            elif self._requested_now(i):
                self.acc_red_wait[i - 1] += dt
                if self.acc_red_wait[i - 1] > self.max_red_wait[i - 1]:
                    self.max_red_wait[i - 1] = self.acc_red_wait[i - 1]

    def _conservation(self, now: float) -> None:
        in_lane = sum(1 for lane in self.lanes.values()
                      for v in lane.vehicles if not v.departed)
        pending = sum(len(lane.pending) for lane in self.lanes.values())
        if sum(self.drawn) != in_lane + pending + self.departures_total:
            raise SimulationError(
                f"vehicle conservation broke at {now:.1f}s: drawn={sum(self.drawn)} "
                f"in_lane={in_lane} pending={pending} departed={self.departures_total}")

    # -- main loop

    def run(self) -> SimResult:
        cfg = self.cfg
        ticks = int(round(cfg.duration_s / cfg.tick_s))
        if cfg.control == "fixed":
            self._apply_green_set(self.fixed_phases[0], 0.0, 0,
                                  cfg.fixed_green_s, "timer")
            if len(self.fixed_phases) > 1:
                self.next_fixed_switch = cfg.fixed_green_s

        for k in range(1, ticks + 1):
            now = k * cfg.tick_s
            self._move(now, k)

            if self.loop is not None:
                for change in self.loop.tick(now):
                    self._apply_green_set(change.decision.green_set,
                                          change.switched_at_s, k,
                                          change.decision.duration_s,
                                          change.decision.trigger)
            elif now + 1e-9 >= self.next_fixed_switch:
                self.fixed_index = (self.fixed_index + 1) % len(self.fixed_phases)
                self._apply_green_set(self.fixed_phases[self.fixed_index],
                                      self.next_fixed_switch, k,
                                      cfg.fixed_green_s, "timer")
                self.next_fixed_switch += cfg.fixed_green_s

            for lane in self.lanes.values():
                if now + 1e-9 >= lane.next_cut:
                    self._cut_window(lane, min(lane.next_cut, now))

            for beacon in cfg.demand.emergencies:
                key = (beacon.approach, beacon.timestamp_s)
                if key not in self.fired_beacons and now >= beacon.timestamp_s:
                    self.fired_beacons.add(key)
                    self.ap.notify_beacon(beacon)
                    self.log(k, "emergency", "beacon",
                             f"approach {beacon.approach}")

            self._spawn(now, k)
            self._pedestrians(now, k)
            self._update_fairness(cfg.tick_s)
            self._conservation(now)

        for lane in self.lanes.values():
            self._cut_window(lane, ticks * cfg.tick_s)
        return self._finish(ticks * cfg.tick_s)

    def _finish(self, end_s: float) -> SimResult:
        for i in range(1, self.n + 1):
            gap = end_s - self.last_green_start[i - 1]
            if gap > self.max_green_gap[i - 1]:
                self.max_green_gap[i - 1] = gap
        all_delays = [d for ds in self.delays.values() for d in ds]
        per_mean = tuple(
            sum(self.delays[i]) / len(self.delays[i]) if self.delays[i] else 0.0
            for i in range(1, self.n + 1))
        per_max = tuple(max(self.delays[i], default=0.0)
                        for i in range(1, self.n + 1))
        cfg = self.cfg
        metrics = SimMetrics(
            duration_s=end_s,
            arrivals=sum(self.drawn),
            throughput=self.departures_total,
            avg_intersection_speed_mps=(
                self.speed_sum / self.departures_total if self.departures_total
                else cfg.demand.desired_speed_mps),
            mean_wait_s=sum(all_delays) / len(all_delays) if all_delays else 0.0,
            max_wait_s=max(all_delays, default=0.0),
            per_event_mean_wait_s=per_mean,
            per_event_max_wait_s=per_max,
            max_queue_m_by_lane=tuple(sorted(
                (lane.lane_id, lane.max_queue_m) for lane in self.lanes.values())),
            pedestrians_served=len(self.ped_waits),
            pedestrian_mean_wait_s=(sum(self.ped_waits) / len(self.ped_waits)
                                    if self.ped_waits else 0.0),
            max_requested_red_wait_s=tuple(self.max_red_wait),
            green_grants=tuple(self.grants),
            max_green_gap_s=tuple(self.max_green_gap))
        return SimResult(config=self.cfg, metrics=metrics,
                         event_log=self.event_log, decisions=self.decisions,
                         lane_traces={lid: list(lane.trace)
                                      for lid, lane in self.lanes.items()},
                         access_point=self.ap, labels=self.labels)


def run(config: SimConfig) -> SimResult:
    """Run one deterministic closed-loop simulation."""
    return _Sim(config).run()


def cycle_sweep(config: SimConfig, green_lengths) -> list[tuple[float, float]]:
    """Average intersection speed under a fixed two-phase plan, per green
    length.  Each entry runs a fresh simulation with the same seed."""
    out = []
    for g in green_lengths:
        cfg = replace(config, control="fixed", fixed_green_s=float(g))
        result = run(cfg)
        out.append((float(g), result.metrics.avg_intersection_speed_mps))
    return out


# --- CSV renderers --------------------------------------------------------

METRICS_CSV_HEADER = (
    "duration_s", "arrivals", "throughput", "avg_speed_mps", "mean_wait_s",
    "max_wait_s", "pedestrians_served", "ped_mean_wait_s", "max_queue_m",
    "max_requested_red_wait_s")

DECISIONS_CSV_HEADER = ("clock_s", "green_set", "duration_s", "trigger")

EVENTS_CSV_HEADER = ("tick", "entity", "event", "detail")


def metrics_csv(metrics: SimMetrics) -> str:
    peak_queue = max((q for _, q in metrics.max_queue_m_by_lane), default=0.0)
    worst_wait = max(metrics.max_requested_red_wait_s, default=0.0)
    row = (repr(metrics.duration_s), str(metrics.arrivals),
           str(metrics.throughput), repr(metrics.avg_intersection_speed_mps),
           repr(metrics.mean_wait_s), repr(metrics.max_wait_s),
           str(metrics.pedestrians_served), repr(metrics.pedestrian_mean_wait_s),
           repr(peak_queue), repr(worst_wait))
    return ",".join(METRICS_CSV_HEADER) + "\n" + ",".join(row) + "\n"


def decisions_csv(result: SimResult) -> str:
    lines = [",".join(DECISIONS_CSV_HEADER)]
    lines.extend(",".join(row) for row in result.decisions)
    return "\n".join(lines) + "\n"


def events_csv(result: SimResult) -> str:
    lines = [",".join(EVENTS_CSV_HEADER)]
    for tick, entity, event, detail in result.event_log:
        lines.append(f"{tick},{entity},{event},{detail}")
    return "\n".join(lines) + "\n"
