"""Independent recount oracles and random-trace generators for tests.

Everything here is written against the plain definitions of the
aggregates, on purpose not sharing code with the package: green cars are
stop-line exits inside the window, red cars are far-end entry passes,
speed comes from exit-ordered sensor-pair matching, and the queue is the
contiguous run of long-occupied sensors at the stop line.
"""
from __future__ import annotations

import random

from crossflow.sensing import DetectionEvent


def brute_force_window(detections, lane, span_m, spacing_m, stopped_speed_mps,
                       light, t0, t1):
    """Recount one window straight from the raw trace.

    Returns (cars, avg_speed or None, queue_m).
    """
    assert all(d.lane == lane for d in detections)
    closed = [d for d in detections if d.exit_s is not None]

    if light == "green":
        cars = len([d for d in closed if d.position_m == 0.0 and t0 <= d.exit_s < t1])
        down = sorted(d.exit_s for d in closed if d.position_m == 0.0)
        up = sorted(d.exit_s for d in closed if d.position_m == spacing_m)
        speeds = []
        for a, b in zip(up, down):
            if b > a and t0 <= b < t1:
                speeds.append(spacing_m / (b - a))
        avg = sum(speeds) / len(speeds) if speeds else None
    else:
        cars = len([d for d in closed if d.position_m == span_m and t0 <= d.exit_s < t1])
        avg = None

    # queue: walk sensors outward from the stop line
    pos = 0.0
    queue = 0.0
    min_dwell = spacing_m / stopped_speed_mps
    while pos <= span_m + 1e-9:
        hit = [d for d in detections
               if d.position_m == pos and d.enter_s <= t1
               and (d.exit_s is None or t1 < d.exit_s)]
        if not hit:
            break
        since = hit[0].enter_s
        if t1 - since < min_dwell:
            break
        queue += spacing_m
        pos += spacing_m
    return cars, avg, queue


def make_random_trace(rng: random.Random, lane="L", span_m=20.0, spacing_m=4.0,
                      horizon_s=60.0):
    """A physically ordered random trace plus a tiling window schedule.

    Vehicles clear the stop-line sensor pair in strict order, spaced
    widely enough that exit order matches at both sensors and no two
    occupy one sensor at once.  A quarter of them dwell long enough to
    count as a stopped queue head; an inner run of sensors carries a
    random standing queue and the far-end sensor sees random entry
    passes.  Returns (detections, windows) with windows tiling
    [0, horizon_s).
    """
    dets: list[DetectionEvent] = []

    prev_exit0 = rng.uniform(1.0, 3.0)
    while True:
        v = rng.uniform(2.0, 15.0)
        queue_head = rng.random() < 0.25
        dwell = rng.uniform(3.0, 10.0) if queue_head else rng.uniform(0.02, 0.2)
        exit0 = prev_exit0 + dwell + spacing_m / 2.0 + rng.uniform(0.3, 2.0)
        if exit0 >= horizon_s - 0.5:
            break
        exit1 = exit0 - spacing_m / v
        dets.append(DetectionEvent(lane, spacing_m, exit1 - dwell, exit1))
        dets.append(DetectionEvent(lane, 0.0, exit0 - dwell, exit0))
        prev_exit0 = exit0

    n_sensors = int(span_m / spacing_m) + 1
    run = rng.randint(0, n_sensors - 1)
    for i in range(2, 2 + run):
        if i >= n_sensors - 1:
            break  # keep the far-end entry sensor clear of the queue body
        enter = rng.uniform(0.0, horizon_s * 0.6)
        if rng.random() < 0.5:
            dets.append(DetectionEvent(lane, i * spacing_m, enter, None))
        else:
            dets.append(DetectionEvent(lane, i * spacing_m, enter,
                                       enter + rng.uniform(1.0, 20.0)))

    entry_t = rng.uniform(0.5, 4.0)
    while entry_t < horizon_s - 0.5:
        dets.append(DetectionEvent(lane, span_m, entry_t, entry_t + 0.05))
        entry_t += rng.uniform(1.0, 12.0)

    windows = []
    t0 = 0.0
    light = rng.choice(["green", "red"])
    while t0 < horizon_s:
        t1 = min(horizon_s, t0 + rng.uniform(2.0, 8.0))
        windows.append((t0, t1, light))
        t0 = t1
        if rng.random() < 0.4:
            light = "green" if light == "red" else "red"
    return dets, windows
