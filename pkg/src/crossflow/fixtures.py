"""Bundled reference data and its loaders.

The package ships a small set of reference fixtures used by the
verification command and the test suite:

* ``reference_adjacency.txt`` - a published 16-event conflict matrix for
  the four-street crossroad, kept exactly as printed.  The printed table
  is asymmetric in one cell pair, which the loader repairs on request;
  the repaired variant is shipped alongside as
  ``reference_adjacency_sym.txt``.
* ``reference_counters.txt`` - a published vector of per-event change
  counters for the same crossroad.
* ``reference_event_list.txt`` - a published event list for the same
  crossroad.  It has 15 entries where the full enumeration has 16: the
  movement IN3OUT4 is missing from the printed list.
* ``reference_lane_log.csv`` / ``reference_lane_windows.json`` /
  ``reference_lane_log_expected.csv`` - a single-lane detection trace,
  its reporting-window schedule, and the six aggregate rows the trace
  must reproduce (three green windows, then three red ones; the third
  green window is truncated by the light change).  Row timestamps name
  the window end; the clock rendering starts from the epoch stored in
  the window schedule.
"""
from __future__ import annotations

import csv
import json
from importlib import resources

from .sensing import DetectionEvent, detections_from_csv

LANE_LOG_LANE = "L1"
LANE_LOG_EPOCH_S = 44627.55  # clock seconds-of-day of trace time zero
LANE_LOG_GEOMETRY = {"span_m": 200.0, "spacing_m": 1.0, "stopped_speed_mps": 2.0}

# (start_s, end_s, light) relative to the trace clock; rows are stamped
# with the window end.  Green ends and red begins at 12.25.
LANE_LOG_WINDOWS = (
    (0.0, 5.0, "green"),
    (5.0, 10.21, "green"),
    (10.21, 12.25, "green"),
    (12.25, 17.5, "red"),
    (17.5, 22.52, "red"),
    (22.52, 27.46, "red"),
)


def _data(name: str):
    return resources.files("crossflow").joinpath("data").joinpath(name)


def printed_adjacency() -> list[list[int]]:
    from .topology import read_conflict_matrix
    with resources.as_file(_data("reference_adjacency.txt")) as p:
        return read_conflict_matrix(p)


def symmetrized_adjacency() -> list[list[int]]:
    from .topology import read_conflict_matrix
    with resources.as_file(_data("reference_adjacency_sym.txt")) as p:
        return read_conflict_matrix(p)


def reference_counters() -> list[int]:
    text = _data("reference_counters.txt").read_text(encoding="utf-8")
    return [int(tok) for tok in text.split()]


def printed_event_labels() -> list[str]:
    text = _data("reference_event_list.txt").read_text(encoding="utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip()]


def lane_log_detections() -> list[DetectionEvent]:
    with resources.as_file(_data("reference_lane_log.csv")) as p:
        return detections_from_csv(p)


def lane_log_windows() -> list[tuple[float, float, str]]:
    text = _data("reference_lane_windows.json").read_text(encoding="utf-8")
    doc = json.loads(text)
    return [(w["start_s"], w["end_s"], w["light"]) for w in doc["windows"]]


def lane_log_setup() -> dict:
    """Lane id, clock epoch, and sensor geometry of the bundled trace."""
    text = _data("reference_lane_windows.json").read_text(encoding="utf-8")
    doc = json.loads(text)
    return {"lane": doc["lane"], "epoch_s": doc["epoch_s"],
            "geometry": doc["geometry"]}


def lane_log_expected() -> list[dict[str, str]]:
    """The six published rows, as rendered strings keyed by column."""
    with resources.as_file(_data("reference_lane_log_expected.csv")) as p:
        with open(p, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))


def scenario_path():
    """Path-like handle of the bundled demonstration scenario."""
    return _data("scenario_crossroad.json")


# --- lane log construction ------------------------------------------------
#
# The shipped trace is generated by build_lane_log() below; a test pins
# the CSV against this builder so the data file cannot drift.  The trace
# is synthetic: detections are laid out so that each reporting window
# reproduces its published row exactly under the aggregation rules
# (green rows count stop-line exits and average the speed-pair
# estimates; red rows count entry-sensor passes; every row snapshots the
# stopped queue at the window end).

_PASS_DWELL_S = 0.04


def _vehicle_pass(out: list[DetectionEvent], exit0_s: float, speed: float) -> None:
    # sensor pair at 1 m and 0 m from the stop line
    exit1 = exit0_s - 1.0 / speed
    out.append(DetectionEvent(LANE_LOG_LANE, 1.0, exit1 - _PASS_DWELL_S, exit1))
    out.append(DetectionEvent(LANE_LOG_LANE, 0.0, exit0_s - _PASS_DWELL_S, exit0_s))


def _stop(out: list[DetectionEvent], position: float, enter_s: float,
          exit_s: float | None) -> None:
    out.append(DetectionEvent(LANE_LOG_LANE, position, enter_s, exit_s))


def build_lane_log() -> list[DetectionEvent]:
    out: list[DetectionEvent] = []

    # green window 1: 19 vehicles at 7 m/s
    for k in range(19):
        _vehicle_pass(out, 0.45 + 0.18 * k, 7.0)
    # queue head standing over the stop-line pair across the window
    # boundary; it departs as the first of window 2's 26 vehicles
    _stop(out, 1.0, 4.35, 5.05)
    _stop(out, 0.0, 4.35, 5.15)

    # green window 2: remaining 25 vehicles at 10 m/s
    for k in range(25):
        _vehicle_pass(out, 5.30 + 0.10 * k, 10.0)
    _stop(out, 1.0, 9.60, 10.45 - 1.0 / 13.0)
    _stop(out, 0.0, 9.60, 10.45)

    # green window 3: remaining 11 vehicles at 13 m/s
    for k in range(11):
        _vehicle_pass(out, 10.60 + 0.09 * k, 13.0)
    # red-phase queue head, standing for the rest of the trace
    _stop(out, 1.0, 11.70, None)
    _stop(out, 0.0, 11.70, None)

    # queue body occupancy; runs shrink from 200 m to 30 m while green,
    # then grow to 160 m under red
    for p in range(2, 30):
        _stop(out, float(p), 4.35, None)
    for p in range(30, 60):
        _stop(out, float(p), 4.35, 10.60)
        _stop(out, float(p), 15.30, None)
    for p in range(60, 121):
        _stop(out, float(p), 4.35, 10.60)
        _stop(out, float(p), 20.00, None)
    for p in range(121, 127):
        _stop(out, float(p), 4.35, 10.60)
        _stop(out, float(p), 24.90, None)
    for p in range(127, 160):
        _stop(out, float(p), 4.35, 6.50)
        _stop(out, float(p), 24.90, None)
    for p in range(160, 200):
        _stop(out, float(p), 4.35, 6.50)

    # entry-sensor passes while red: 15, then 13, then 7 vehicles
    for k in range(15):
        enter = 12.70 + 0.30 * k
        _stop(out, 200.0, enter, enter + _PASS_DWELL_S)
    for k in range(13):
        enter = 17.80 + 0.35 * k
        _stop(out, 200.0, enter, enter + _PASS_DWELL_S)
    for k in range(7):
        enter = 22.80 + 0.60 * k
        _stop(out, 200.0, enter, enter + _PASS_DWELL_S)

    out.sort(key=lambda d: (d.position_m, d.enter_s))
    return out
