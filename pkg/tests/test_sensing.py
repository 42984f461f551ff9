import pytest

from crossflow.sensing import (
    DetectionEvent,
    EmergencyBeacon,
    LaneSensorArray,
    PedestrianArea,
    detect_jam,
    detections_from_csv,
    detections_to_csv,
    estimate_speed,
    layout_sensors,
    pedestrian_wait_count,
    reporting_schedule,
)


def test_speed_from_sensor_pair():
    # 4 m apart, passed 4/7 s apart: 7 m/s, exact when the subtraction is
    assert estimate_speed(0.0, 4.0 / 7.0, 4.0) == 7.0
    assert estimate_speed(0.0, 0.5, 4.0) == 8.0
    # at large absolute times the difference picks up rounding noise
    v = estimate_speed(100.0, 100.0 + 1.0 / 13.0, 1.0)
    assert abs(v - 13.0) < 1e-9


def test_speed_rejects_non_causal_pairs():
    with pytest.raises(ValueError, match="non-causal"):
        estimate_speed(5.0, 5.0, 4.0)
    with pytest.raises(ValueError, match="non-causal"):
        estimate_speed(5.0, 4.9, 4.0)
    with pytest.raises(ValueError, match="spacing"):
        estimate_speed(0.0, 1.0, 0.0)


def test_layout_sensors_positions():
    arr = layout_sensors("L1", 200.0, 4.0)
    assert len(arr) == 51
    assert arr.positions[0] == 0.0
    assert arr.positions[-1] == 200.0
    assert layout_sensors("L1", 0.0, 4.0).positions == (0.0,)
    assert layout_sensors("L1", 9.0, 3.0).positions == (0.0, 3.0, 6.0, 9.0)
    with pytest.raises(ValueError):
        layout_sensors("L1", 10.0, 0.0)
    with pytest.raises(ValueError):
        layout_sensors("L1", -1.0, 4.0)


def test_sensor_slot_lookup():
    arr = layout_sensors("L1", 12.0, 4.0)
    assert arr.slot(0.0) == 0
    assert arr.slot(8.0) == 2
    with pytest.raises(ValueError):
        arr.slot(5.0)


def test_occupancy_snapshot_from_trace():
    arr = layout_sensors("L1", 8.0, 4.0)
    trace = [
        DetectionEvent("L1", 0.0, 1.0, 2.0),
        DetectionEvent("L1", 4.0, 1.5, None),
        DetectionEvent("L1", 8.0, 3.0, 4.0),
    ]
    arr.set_occupancy(trace, at_s=1.8)
    assert arr.occupied_since == [1.0, 1.5, None]
    arr.set_occupancy(trace, at_s=3.5)
    assert arr.occupied_since == [None, 1.5, 3.0]
    # interval is half-open: gone exactly at exit time
    arr.set_occupancy(trace, at_s=2.0)
    assert arr.occupied_since == [None, 1.5, None]
    with pytest.raises(ValueError, match="lane"):
        arr.set_occupancy([DetectionEvent("L2", 0.0, 0.0, None)], at_s=1.0)


def test_jam_needs_long_green_dwell():
    arr = layout_sensors("L1", 8.0, 4.0)
    arr.occupied_since = [100.0, None, 130.0]
    # dwell 70 s and 40 s; only the stop-line sensor qualifies
    flag, pos = detect_jam(arr, now_s=170.0, threshold_s=60.0)
    assert flag and pos == 0.0
    # same trace but green only began at 120: dwell capped at 50 s
    flag, pos = detect_jam(arr, now_s=170.0, threshold_s=60.0, green_since_s=120.0)
    assert not flag and pos is None


def test_jam_reports_sensor_closest_to_stop_line():
    arr = layout_sensors("L1", 12.0, 4.0)
    arr.occupied_since = [None, 10.0, 5.0, None]
    flag, pos = detect_jam(arr, now_s=200.0, threshold_s=60.0)
    assert flag and pos == 4.0


def test_pedestrian_area_clamps_at_capacity():
    a = PedestrianArea(crossing=1, side="A", capacity=8)
    a.arrive(5)
    a.arrive(5)
    assert a.waiting == 8
    b = PedestrianArea(crossing=1, side="B", capacity=3, waiting=9)
    assert b.waiting == 3
    assert pedestrian_wait_count(a, b) == 11
    a.clear()
    assert pedestrian_wait_count(a, b) == 3
    with pytest.raises(ValueError):
        pedestrian_wait_count(a, PedestrianArea(crossing=2, side="B", capacity=3))
    with pytest.raises(ValueError):
        PedestrianArea(crossing=1, side="left", capacity=3)


def test_reporting_schedule_spreads_nodes():
    sched = reporting_schedule(nodes=4, period_s=8.0)
    assert sched.offsets == (0.0, 2.0, 4.0, 6.0)
    assert sched.slot_of(3) == 6.0
    times = sched.transmissions(until_s=16.0)
    assert times == [(0.0, 0), (2.0, 1), (4.0, 2), (6.0, 3),
                     (8.0, 0), (10.0, 1), (12.0, 2), (14.0, 3)]
    assert len({t for t, _ in times}) == len(times)
    with pytest.raises(ValueError):
        sched.slot_of(4)
    with pytest.raises(ValueError):
        reporting_schedule(0, 8.0)
    with pytest.raises(ValueError):
        reporting_schedule(4, 0.0)


def test_emergency_beacon_fields():
    b = EmergencyBeacon(approach=2, timestamp_s=300.0)
    assert b.approach == 2 and b.timestamp_s == 300.0


def test_trace_csv_round_trip(tmp_path):
    trace = [
        DetectionEvent("L1", 0.0, 0.41, 0.45),
        DetectionEvent("L1", 4.0, 1.0 / 3.0, 0.45 - 1.0 / 7.0),
        DetectionEvent("L1", 8.0, 2.5, None),
    ]
    path = tmp_path / "trace.csv"
    detections_to_csv(trace, path)
    back = detections_from_csv(path)
    assert back == trace
    assert not back[2].closed and back[0].closed


def test_trace_csv_rejects_malformed_files(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("lane,position\nL1,0\n")
    with pytest.raises(ValueError, match="header"):
        detections_from_csv(p)
    p.write_text("lane,position_m,enter_s,exit_s\nL1,0.0,1.0\n")
    with pytest.raises(ValueError, match="4 fields"):
        detections_from_csv(p)
