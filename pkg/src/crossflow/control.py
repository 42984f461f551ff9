"""Traffic-light control: urgency scoring, fairness, phase selection.

Each grantable event gets an urgency score built from its queue, its
red wait, the length of its previous green, and the number of waiting
vehicles or pedestrians.  A change counter per event tracks how often it
has been granted; selection seeds from the least-granted requested
events and greedily grows a conflict-free green set by descending
urgency.  Two fairness rules override scoring: an event whose red wait
passed the configured threshold, or that watched the lights change
often enough without being served, must be in the next green set.

The decision loop closes the circle: it polls the access point on a
reading timer, recomputes on fresh data or when the running phase
expires, announces each switch a countdown lead ahead of time, and
applies counter bookkeeping at the actual switch instant.  Emergency
beacons preempt everything else.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from .aggregation import DemandSnapshot, EventDemand
from .topology import ConflictGraph, EventKind, EventSet, is_compatible_set


class Mode(Enum):
    NORMAL = "normal"
    VEHICLE_DECONGESTION = "vehicle_decongestion"
    PEDESTRIAN_SCRAMBLE = "pedestrian_scramble"


@dataclass(frozen=True)
class FitnessInputs:
    """Per-event urgency ingredients; queue_m stays 0 for pedestrian events."""

    queue_m: float = 0.0
    red_wait_s: float = 0.0
    prev_green_s: float = 0.0
    waiting: float = 0.0

    def __post_init__(self) -> None:
        for name in ("queue_m", "red_wait_s", "prev_green_s", "waiting"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} cannot be negative")


@dataclass(frozen=True)
class FitnessWeights:
    """Weights and normalization caps of the urgency score."""

    w_queue: float = 1.0
    w_wait: float = 1.0
    w_recent_green: float = 0.5
    w_count: float = 1.0
    cap_queue_m: float = 200.0
    cap_wait_s: float = 150.0
    cap_green_s: float = 60.0
    cap_count: float = 30.0

    def __post_init__(self) -> None:
        weights = (self.w_queue, self.w_wait, self.w_recent_green, self.w_count)
        if any(w < 0 for w in weights):
            raise ValueError("weights cannot be negative")
        if not any(w > 0 for w in weights):
            raise ValueError("at least one weight must be positive")
        caps = (self.cap_queue_m, self.cap_wait_s, self.cap_green_s, self.cap_count)
        if any(c <= 0 for c in caps):
            raise ValueError("normalization caps must be positive")


def fitness(inputs: FitnessInputs, weights: FitnessWeights) -> float:
    """Urgency score: capped-linear mix, recent green counting against."""
    return (weights.w_queue * min(inputs.queue_m / weights.cap_queue_m, 1.0)
            + weights.w_wait * min(inputs.red_wait_s / weights.cap_wait_s, 1.0)
            - weights.w_recent_green * min(inputs.prev_green_s / weights.cap_green_s, 1.0)
            + weights.w_count * min(inputs.waiting / weights.cap_count, 1.0))


@dataclass(frozen=True)
class ControllerConfig:
    max_red_wait_s: float = 150.0
    min_green_s: float = 5.0
    max_green_s: float = 20.0
    countdown_lead_s: float = 3.0
    raise_twice_rule: bool = True
    count_all_on_change: bool = False
    mode: Mode = Mode.NORMAL
    saturation_demand: float = 4.0
    reading_period_s: float = 5.0

    def __post_init__(self) -> None:
        if not 0 < self.min_green_s <= self.max_green_s:
            raise ValueError("need 0 < min_green_s <= max_green_s")
        if self.countdown_lead_s < 2:
            raise ValueError("countdown_lead_s must be at least 2 seconds")
        if self.max_red_wait_s <= 0:
            raise ValueError("max_red_wait_s must be positive")
        if self.saturation_demand <= 0:
            raise ValueError("saturation_demand must be positive")
        if self.reading_period_s <= 0:
            raise ValueError("reading_period_s must be positive")


@dataclass(frozen=True)
class PhaseDecision:
    green_set: frozenset[int]
    duration_s: float
    countdown_lead_s: float
    trigger: str = "timer"

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")


@dataclass(frozen=True)
class ControllerState:
    """Per-event bookkeeping the fairness rules and counters live on.

    All vectors are indexed by event - 1.  ``green_since_s`` tracks when
    each currently green event turned green, so the previous-green
    duration can be recorded when it ends.
    """

    t_counters: tuple[int, ...]
    red_wait_s: tuple[float, ...]
    prev_green_s: tuple[float, ...]
    requested: tuple[bool, ...]
    raised_since: tuple[int, ...]
    green_since_s: tuple[float, ...]
    current_green: frozenset[int] = frozenset()
    clock_s: float = 0.0

    def __post_init__(self) -> None:
        n = len(self.t_counters)
        for name in ("red_wait_s", "prev_green_s", "requested",
                     "raised_since", "green_since_s"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have {n} entries")
        for i in self.current_green:
            if not 1 <= i <= n:
                raise ValueError(f"green event {i} out of range 1..{n}")
            if self.red_wait_s[i - 1] != 0:
                raise ValueError(f"green event {i} cannot carry red wait")
        if any(t < 0 for t in self.t_counters) or any(r < 0 for r in self.raised_since):
            raise ValueError("counters cannot be negative")

    @property
    def n(self) -> int:
        return len(self.t_counters)

    @classmethod
    def initial(cls, n: int, clock_s: float = 0.0) -> "ControllerState":
        return cls(t_counters=(0,) * n, red_wait_s=(0.0,) * n,
                   prev_green_s=(0.0,) * n, requested=(False,) * n,
                   raised_since=(0,) * n, green_since_s=(0.0,) * n,
                   clock_s=clock_s)


def advance_clock(state: ControllerState, dt_s: float) -> ControllerState:
    """Move time forward; red waits accumulate for every non-green event."""
    if dt_s < 0:
        raise ValueError("time cannot move backwards")
    waits = tuple(w if (i + 1) in state.current_green else w + dt_s
                  for i, w in enumerate(state.red_wait_s))
    return replace(state, clock_s=state.clock_s + dt_s, red_wait_s=waits)


def set_requested(state: ControllerState, flags) -> ControllerState:
    flags = tuple(bool(f) for f in flags)
    if len(flags) != state.n:
        raise ValueError(f"expected {state.n} request flags")
    return replace(state, requested=flags)


def min_counter_events(t_counters, requested) -> set[int]:
    """Requested events whose change counter sits at the requested minimum."""
    if len(t_counters) != len(requested):
        raise ValueError("counter and request vectors differ in length")
    values = [t for t, r in zip(t_counters, requested) if r]
    if not values:
        return set()
    lowest = min(values)
    return {i + 1 for i, (t, r) in enumerate(zip(t_counters, requested))
            if r and t == lowest}


def mandatory_events(state: ControllerState, config: ControllerConfig) -> list[int]:
    """Events fairness forces into the next green set, unordered."""
    limit = 2 * (state.n - 1)
    out = []
    for i in range(1, state.n + 1):
        if not state.requested[i - 1]:
            continue
        if state.red_wait_s[i - 1] > config.max_red_wait_s:
            out.append(i)
        elif config.raise_twice_rule and state.raised_since[i - 1] >= limit:
            out.append(i)
    return out


def _phase_duration(green, fitness_per_event, config: ControllerConfig) -> float:
    demand = sum(max(fitness_per_event[i - 1], 0.0) for i in green)
    span = config.max_green_s - config.min_green_s
    return config.min_green_s + span * min(1.0, demand / config.saturation_demand)


def select_phase(state: ControllerState, graph: ConflictGraph, fitness_per_event,
                 config: ControllerConfig,
                 events: EventSet | None = None) -> PhaseDecision:
    """Pick the next conflict-free green set.

    Deterministic: fairness-mandatory events first (served in ascending
    change-counter order, compatible prefix only), otherwise seeded from
    the least-granted requested events by urgency, then greedily
    extended with compatible requested events by descending urgency.
    ``events`` supplies the vehicle/pedestrian split the non-normal
    modes filter on.
    """
    n = state.n
    if graph.n != n or len(fitness_per_event) != n:
        raise ValueError(f"state, graph, and urgency vector must all cover {n} events")
    if events is not None and len(events) != n:
        raise ValueError(f"event set covers {len(events)} events, expected {n}")

    if config.mode is not Mode.NORMAL and events is None:
        raise ValueError(f"{config.mode.value} mode needs the event set")

    if config.mode is Mode.PEDESTRIAN_SCRAMBLE:
        ped = [ev.index for ev in events.pedestrians]
        if not is_compatible_set(graph, ped):
            raise ValueError("pedestrian events conflict; scramble impossible")
        return PhaseDecision(green_set=frozenset(ped),
                             duration_s=config.max_green_s,
                             countdown_lead_s=config.countdown_lead_s,
                             trigger="scramble")

    if config.mode is Mode.VEHICLE_DECONGESTION:
        candidates = [ev.index for ev in events.vehicles]
    else:
        candidates = list(range(1, n + 1))

    requested = [i for i in candidates if state.requested[i - 1]]
    if not requested:
        return PhaseDecision(green_set=frozenset(state.current_green),
                             duration_s=config.min_green_s,
                             countdown_lead_s=config.countdown_lead_s)

    chosen: list[int] = []

    def fits(i: int) -> bool:
        return all(not graph.conflicts(i, j) for j in chosen)

    mandatory = [i for i in mandatory_events(state, config) if i in set(candidates)]
    if mandatory:
        # longest-starved first by counter; only a conflict-free prefix
        # enters this phase, the rest waits for the next one
        mandatory.sort(key=lambda i: (state.t_counters[i - 1], i))
        for i in mandatory:
            if fits(i):
                chosen.append(i)
            else:
                break
    else:
        seeds = min_counter_events(
            [state.t_counters[i - 1] for i in requested],
            [True] * len(requested))
        pool = sorted((requested[k - 1] for k in seeds),
                      key=lambda i: (-fitness_per_event[i - 1], i))
        chosen.append(pool[0])

    for i in sorted(requested, key=lambda i: (-fitness_per_event[i - 1],
                                              state.t_counters[i - 1], i)):
        if i not in chosen and fits(i):
            chosen.append(i)

    return PhaseDecision(green_set=frozenset(chosen),
                         duration_s=_phase_duration(chosen, fitness_per_event, config),
                         countdown_lead_s=config.countdown_lead_s)


def on_lights_changed(state: ControllerState, decision: PhaseDecision,
                      count_all_on_change: bool = False) -> ControllerState:
    """Counter bookkeeping at the actual switch instant.

    Granted events get their change counter bumped (or every event, with
    ``count_all_on_change``), their red wait zeroed, and their
    starvation tally reset; everyone else's starvation tally grows.
    Events leaving green record how long their green lasted.
    """
    granted = decision.green_set
    for i in granted:
        if not 1 <= i <= state.n:
            raise ValueError(f"granted event {i} out of range 1..{state.n}")

    t = tuple(v + 1 if count_all_on_change or (i + 1) in granted else v
              for i, v in enumerate(state.t_counters))
    raised = tuple(0 if (i + 1) in granted else r + 1
                   for i, r in enumerate(state.raised_since))
    waits = tuple(0.0 if (i + 1) in granted else w
                  for i, w in enumerate(state.red_wait_s))
    prev = list(state.prev_green_s)
    since = list(state.green_since_s)
    for i in state.current_green:
        if i not in granted:
            prev[i - 1] = state.clock_s - state.green_since_s[i - 1]
            since[i - 1] = 0.0
    for i in granted:
        if i not in state.current_green:
            since[i - 1] = state.clock_s
    return replace(state, t_counters=t, raised_since=raised, red_wait_s=waits,
                   prev_green_s=tuple(prev), green_since_s=tuple(since),
                   current_green=frozenset(granted))


def preempt_emergency(state: ControllerState, graph: ConflictGraph,
                      events: EventSet, approach: int,
                      config: ControllerConfig) -> PhaseDecision:
    """Clear the way out of one approach, fairness notwithstanding."""
    known = set()
    for ev in events:
        if ev.kind is EventKind.VEHICLE:
            known.add(ev.in_street)
            known.add(ev.out_street)
        else:
            known.add(ev.street)
    if approach not in known:
        raise ValueError(f"unknown approach street {approach}")

    chosen: list[int] = []
    for ev in events.approach_movements(approach):
        if all(not graph.conflicts(ev.index, j) for j in chosen):
            chosen.append(ev.index)
    if not chosen:
        return PhaseDecision(green_set=frozenset(state.current_green),
                             duration_s=config.min_green_s,
                             countdown_lead_s=config.countdown_lead_s,
                             trigger="emergency")
    return PhaseDecision(green_set=frozenset(chosen),
                         duration_s=config.max_green_s,
                         countdown_lead_s=config.countdown_lead_s,
                         trigger="emergency")


# --- decision loop --------------------------------------------------------


@dataclass(frozen=True)
class AppliedChange:
    """One actual light switch, for logs and traces."""

    decided_at_s: float
    switched_at_s: float
    decision: PhaseDecision


@dataclass
class DecisionLoop:
    """Closed-loop controller for one crossroad.

    ``endpoint`` is called with the current time and must return a
    DemandSnapshot; any exception it raises is treated as a transient
    outage: the loop logs it, holds the current phase, and tries again
    at the next reading.  Call ``tick`` with monotonically increasing
    times; it returns the switches applied at that instant.
    """

    graph: ConflictGraph
    events: EventSet
    config: ControllerConfig
    weights: FitnessWeights
    endpoint: object
    state: ControllerState = None
    log: list = field(default_factory=list)
    applied: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.state is None:
            self.state = ControllerState.initial(len(self.events))
        self._demand: tuple[EventDemand, ...] = tuple(
            EventDemand() for _ in range(len(self.events)))
        self._pending: tuple[PhaseDecision, float] | None = None
        self._next_reading_s = self.state.clock_s
        self._phase_until_s = self.state.clock_s
        self._green_began_s = self.state.clock_s
        self._active_emergency: int | None = None

    # -- helpers

    def _fitness_vector(self) -> list[float]:
        out = []
        for i, d in enumerate(self._demand):
            inputs = FitnessInputs(queue_m=d.queue_m,
                                   red_wait_s=self.state.red_wait_s[i],
                                   prev_green_s=self.state.prev_green_s[i],
                                   waiting=d.waiting)
            out.append(fitness(inputs, self.weights))
        return out

    def _schedule(self, decision: PhaseDecision, now_s: float,
                  honor_min_green: bool = True) -> None:
        switch_at = now_s + decision.countdown_lead_s
        if honor_min_green:
            switch_at = max(switch_at, self._green_began_s + self.config.min_green_s)
        self._pending = (decision, switch_at)

    def _apply_pending(self, now_s: float) -> list[AppliedChange]:
        if self._pending is None or now_s < self._pending[1]:
            return []
        decision, switch_at = self._pending
        self._pending = None
        self.state = on_lights_changed(self.state, decision,
                                       self.config.count_all_on_change)
        self._green_began_s = switch_at
        self._phase_until_s = switch_at + decision.duration_s
        change = AppliedChange(decided_at_s=switch_at - decision.countdown_lead_s,
                               switched_at_s=switch_at, decision=decision)
        self.applied.append(change)
        return [change]

    @property
    def pending_switch(self) -> tuple[PhaseDecision, float] | None:
        return self._pending

    # -- main entry

    def tick(self, now_s: float) -> list[AppliedChange]:
        if now_s < self.state.clock_s:
            raise ValueError("tick times must not go backwards")
        self.state = advance_clock(self.state, now_s - self.state.clock_s)
        changes = self._apply_pending(now_s)

        fresh_data = False
        if now_s >= self._next_reading_s:
            self._next_reading_s += self.config.reading_period_s
            try:
                snapshot: DemandSnapshot = self.endpoint(now_s)
            except Exception as exc:
                self.log.append(f"{now_s:.1f}s endpoint unavailable, holding: {exc}")
            else:
                self._demand = snapshot.demand
                self.state = set_requested(self.state,
                                           [d.requested for d in snapshot.demand])
                fresh_data = True
                self._handle_beacons(snapshot, now_s)

        if self._active_emergency is not None or self._pending is not None:
            return changes

        if fresh_data or now_s >= self._phase_until_s:
            decision = select_phase(self.state, self.graph, self._fitness_vector(),
                                    self.config, self.events)
            if fresh_data and decision.trigger == "timer":
                decision = replace(decision, trigger="data")
            if decision.green_set != self.state.current_green:
                self._schedule(decision, now_s)
            elif now_s >= self._phase_until_s:
                # same choice: hold and extend the running phase
                self._phase_until_s = now_s + decision.duration_s
        return changes

    def _handle_beacons(self, snapshot: DemandSnapshot, now_s: float) -> None:
        if not snapshot.beacons:
            self._active_emergency = None
            return
        approach = snapshot.beacons[0].approach
        if self._active_emergency == approach:
            return
        decision = preempt_emergency(self.state, self.graph, self.events,
                                     approach, self.config)
        self._active_emergency = approach
        if decision.green_set != self.state.current_green:
            # emergency overrides the countdown already running and the
            # minimum-green guarantee
            self._pending = None
            self._schedule(decision, now_s, honor_min_green=False)

    def flush_decision_rows(self, labels=None) -> list[tuple]:
        """Render applied changes as (clock_s, green labels, duration, trigger)."""
        if labels is None:
            labels = {ev.index: ev.label for ev in self.events}
        rows = []
        for change in self.applied:
            names = ";".join(labels[i] for i in sorted(change.decision.green_set))
            rows.append((f"{change.switched_at_s:.1f}", names,
                         f"{change.decision.duration_s:.1f}",
                         change.decision.trigger))
        return rows


def replay_counter_oracle(n: int, decisions) -> tuple[int, ...]:
    """Recount change counters from a decision sequence (granted-only rule)."""
    t = [0] * n
    for d in decisions:
        for i in d.green_set:
            t[i - 1] += 1
    return tuple(t)
