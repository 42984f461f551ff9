import random

import pytest
from oracle_tools import brute_force_window, make_random_trace

from crossflow import fixtures
from crossflow.aggregation import (
    AccessPoint,
    AggregateStore,
    CongestionEvent,
    CongestionMonitor,
    LaneAggregate,
    LaneGeometry,
    QueryParams,
    aggregate_csv_rows,
    aggregate_window,
    clock_pattern,
    emit_congestion_events,
    queue_length,
    replay_windows,
)
from crossflow.sensing import DetectionEvent, EmergencyBeacon, layout_sensors


def _lane_log_geometry() -> LaneGeometry:
    setup = fixtures.lane_log_setup()
    g = setup["geometry"]
    return LaneGeometry(lane=setup["lane"], span_m=g["span_m"],
                        spacing_m=g["spacing_m"],
                        stopped_speed_mps=g["stopped_speed_mps"])


def test_bundled_trace_matches_builder():
    assert fixtures.lane_log_detections() == fixtures.build_lane_log()


def test_bundled_trace_replays_to_published_rows():
    aggs = replay_windows(fixtures.lane_log_detections(), _lane_log_geometry(),
                          fixtures.lane_log_windows())
    assert [a.cars_in_window for a in aggs] == [19, 26, 12, 15, 13, 7]
    assert [a.queue_length_m for a in aggs] == [200, 127, 30, 60, 121, 160]
    assert [a.light for a in aggs] == ["green"] * 3 + ["red"] * 3
    for agg, target in zip(aggs[:3], (7.0, 10.0, 13.0)):
        assert abs(agg.avg_speed_mps - target) < 1e-9
    assert all(a.avg_speed_mps is None for a in aggs[3:])


def test_bundled_trace_renders_to_published_table():
    setup = fixtures.lane_log_setup()
    aggs = replay_windows(fixtures.lane_log_detections(), _lane_log_geometry(),
                          fixtures.lane_log_windows())
    rows = aggregate_csv_rows(aggs, epoch_s=setup["epoch_s"])
    expected = fixtures.lane_log_expected()
    assert len(rows) == len(expected)
    for got, want in zip(rows, expected):
        assert got == (want["time_pattern"], want["light"], want["cars"],
                       want["avg_speed_mps"], want["queue_m"])


def test_empty_trace_aggregates_to_zero():
    geom = LaneGeometry(lane="L9")
    for light in ("green", "red"):
        agg = aggregate_window([], geom, light, 0.0, 5.0)
        assert agg.cars_in_window == 0
        assert agg.avg_speed_mps is None
        assert agg.queue_length_m == 0.0


def test_aggregate_window_rejects_mixed_lanes():
    geom = LaneGeometry(lane="L1")
    with pytest.raises(ValueError, match="lane"):
        aggregate_window([DetectionEvent("L2", 0.0, 0.0, 1.0)], geom,
                         "green", 0.0, 5.0)
    with pytest.raises(ValueError):
        aggregate_window([], geom, "green", 5.0, 5.0)


def test_queue_length_contiguous_run():
    arr = layout_sensors("L1", 200.0, 4.0)
    for i in range(50):
        arr.occupied_since[i] = 0.0
    assert queue_length(arr, now_s=100.0, stopped_speed_mps=2.0) == 200.0


def test_queue_length_edge_cases():
    arr = layout_sensors("L1", 20.0, 4.0)
    assert queue_length(arr, 10.0, 2.0) == 0.0
    # gap after two sensors cuts the run
    arr.occupied_since = [0.0, 0.0, None, 0.0, 0.0, 0.0]
    assert queue_length(arr, 100.0, 2.0) == 8.0
    # freshly arrived head still counts as rolling
    arr.occupied_since = [99.5, None, None, None, None, None]
    assert queue_length(arr, 100.0, 2.0) == 0.0
    # zero stopped-speed threshold means nothing ever counts as stopped
    arr.occupied_since = [0.0] * 6
    assert queue_length(arr, 100.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        queue_length(arr, 100.0, -1.0)


def test_replay_windows_rejects_gaps_and_overlaps():
    geom = LaneGeometry(lane="L1")
    with pytest.raises(ValueError, match="window 1"):
        replay_windows([], geom, [(0.0, 5.0, "green"), (6.0, 8.0, "red")])
    with pytest.raises(ValueError, match="window 1"):
        replay_windows([], geom, [(0.0, 5.0, "green"), (4.0, 8.0, "red")])


def test_aggregates_match_brute_force_on_random_traces():
    rng = random.Random(90210)
    for trial in range(8):
        dets, windows = make_random_trace(rng)
        geom = LaneGeometry(lane="L", span_m=20.0, spacing_m=4.0)
        aggs = replay_windows(dets, geom, windows)
        for agg, (t0, t1, light) in zip(aggs, windows):
            cars, avg, queue = brute_force_window(
                dets, "L", 20.0, 4.0, 2.0, light, t0, t1)
            assert agg.cars_in_window == cars, f"trial {trial} window {t0}"
            assert agg.queue_length_m == queue, f"trial {trial} window {t0}"
            if avg is None:
                assert agg.avg_speed_mps is None
            else:
                assert abs(agg.avg_speed_mps - avg) < 1e-12


def test_incremental_ingest_equals_offline_replay():
    rng = random.Random(777)
    geom = LaneGeometry(lane="L", span_m=20.0, spacing_m=4.0)
    for _ in range(5):
        dets, windows = make_random_trace(rng)
        offline = replay_windows(dets, geom, windows)
        ap = AccessPoint([geom], lane_of_street={1: "L"})
        for (t0, t1, light), want in zip(windows, offline):
            batch = [d for d in dets if d.exit_s is not None and t0 <= d.exit_s < t1]
            occ = geom.build_array()
            occ.set_occupancy(dets, t1)
            got = ap.ingest_window("L", batch, occ, light, t0, t1)
            assert got == want


def test_clock_pattern_rendering():
    assert clock_pattern(44627.55) == "12:23:47.55"
    assert clock_pattern(0.0) == "00:00:00.00"
    assert clock_pattern(86399.999) == "00:00:00.00"
    assert clock_pattern(3661.004) == "01:01:01.00"
    assert clock_pattern(86400.0 + 61.25) == "00:01:01.25"


def test_lane_aggregate_invariants():
    with pytest.raises(ValueError, match="speed"):
        LaneAggregate("L1", 0.0, 5.0, "red", 1, 7.0, 0.0)
    with pytest.raises(ValueError):
        LaneAggregate("L1", 0.0, 0.0, "green", 0, None, 0.0)
    with pytest.raises(ValueError):
        LaneAggregate("L1", 0.0, 5.0, "amber", 0, None, 0.0)
    with pytest.raises(ValueError):
        LaneAggregate("L1", 0.0, 5.0, "green", -1, None, 0.0)


def test_query_params_validation():
    with pytest.raises(ValueError):
        QueryParams(windows=0)
    with pytest.raises(ValueError):
        QueryParams(metrics=("cars", "volume"))
    with pytest.raises(ValueError):
        QueryParams(metrics=("cars", "cars"))
    QueryParams(lanes=("L1",), metrics=("pedestrians",), windows=3)


def _agg(lane, start, cars, queue, light="green", speed=None):
    if light == "green" and speed is None:
        speed = 10.0
    return LaneAggregate(lane, start, 5.0, light, cars,
                         None if light == "red" else speed, queue)


def test_answer_query_filters_and_suppresses():
    store = AggregateStore()
    for k in range(10):
        store.append(_agg("L1", 5.0 * k, cars=k, queue=4.0 * k))
        store.append(_agg("L2", 5.0 * k, cars=0, queue=0.0))
    params = QueryParams(lanes=("L1",), metrics=("cars", "queue"), windows=3)
    first = store.answer_query(params)
    assert [a.window_start_s for a in first] == [35.0, 40.0, 45.0]
    # identical repeat: everything already transmitted
    assert store.answer_query(params) == []
    # new row with a fresh projection comes through alone
    store.append(_agg("L1", 50.0, cars=11, queue=44.0))
    assert [a.window_start_s for a in store.answer_query(params)] == [50.0]
    # new row repeating the last projection stays suppressed
    store.append(_agg("L1", 55.0, cars=11, queue=44.0))
    assert store.answer_query(params) == []


def test_select_matches_take_last_oracle():
    # select() is the filtering stage a query applies before suppression
    rng = random.Random(4242)
    for _ in range(20):
        store = AggregateStore()
        lanes = ["L1", "L2", "L3"]
        history = []
        for k in range(rng.randint(0, 30)):
            lane = rng.choice(lanes)
            agg = _agg(lane, 5.0 * k, cars=rng.randint(0, 5),
                       queue=4.0 * rng.randint(0, 10))
            store.append(agg)
            history.append(agg)
        want_lanes = tuple(rng.sample(lanes, rng.randint(1, 3)))
        n = rng.randint(1, 4)
        params = QueryParams(lanes=want_lanes, metrics=("cars",), windows=n)
        expected = []
        for lane in want_lanes:
            expected.extend([a for a in history if a.lane == lane][-n:])
        expected.sort(key=lambda a: (a.window_start_s, a.lane))
        assert store.select(params) == expected
        # a fresh store transmits every distinct-projection row it selects
        sent = store.answer_query(params)
        assert [a for a in expected if a in sent] == sent


def test_congestion_events_are_edge_triggered():
    series = [_agg("L1", 5.0 * k, cars=0, queue=q, light="red")
              for k, q in enumerate([60.0, 121.0, 160.0])]
    events = emit_congestion_events(series, threshold_m=100.0)
    assert len(events) == 1
    assert events[0].queue_length_m == 121.0
    assert events[0].timestamp_s == series[1].window_end_s

    # drop below and re-exceed: a second edge fires
    series += [_agg("L1", 20.0, cars=0, queue=0.0, light="red"),
               _agg("L1", 25.0, cars=0, queue=130.0, light="red")]
    events = emit_congestion_events(series, threshold_m=100.0)
    assert [e.queue_length_m for e in events] == [121.0, 130.0]

    assert emit_congestion_events(
        [_agg("L1", 5.0 * k, 0, 0.0) for k in range(5)], 100.0) == []

    counts = [len(emit_congestion_events(series, t)) for t in (50.0, 100.0, 150.0)]
    assert counts == sorted(counts, reverse=True)

    with pytest.raises(ValueError):
        emit_congestion_events(series, 0.0)
    with pytest.raises(ValueError):
        CongestionEvent("L1", 0.0, 90.0, 100.0)


def test_congestion_monitor_tracks_lanes_independently():
    monitor = CongestionMonitor(100.0)
    assert monitor.observe(_agg("L1", 0.0, 0, 150.0)) is not None
    assert monitor.observe(_agg("L2", 0.0, 0, 150.0)) is not None
    assert monitor.observe(_agg("L1", 5.0, 0, 160.0)) is None


def test_access_point_demand_snapshot():
    from crossflow.topology import CrossroadTopology, enumerate_events

    topo = CrossroadTopology(entering=4, leaving=4, crossings=4)
    events = enumerate_events(topo)
    geoms = [LaneGeometry(lane=f"S{i}", span_m=20.0, spacing_m=4.0)
             for i in range(1, 5)]
    ap = AccessPoint(geoms, lane_of_street={i: f"S{i}" for i in range(1, 5)},
                     crossings={k: k for k in range(1, 5)},
                     congestion_threshold_m=100.0)

    occ = geoms[0].build_array()
    occ.occupied_since = [0.0, 0.0, 0.0, None, None, None]
    ap.ingest_window("S1", [], occ, "red", 0.0, 5.0)
    ap.pedestrian_arrive(2, "A", 3)
    ap.pedestrian_arrive(2, "B", 2)
    ap.notify_beacon(EmergencyBeacon(approach=3, timestamp_s=4.0))

    snap = ap.control_snapshot(events, at_s=5.0)
    assert len(snap.demand) == 16
    in1out2 = snap.demand[events.by_label("IN1OUT2").index - 1]
    assert in1out2.queue_m == 12.0
    assert in1out2.waiting == 12.0 / 5.0
    assert in1out2.requested
    # same approach, same lane: all movements from street 1 see the queue
    assert snap.demand[events.by_label("IN1OUT4").index - 1].requested
    assert not snap.demand[events.by_label("IN2OUT1").index - 1].requested
    cross2 = snap.demand[events.by_label("CROSS2").index - 1]
    assert cross2.waiting == 5.0 and cross2.requested and cross2.queue_m == 0.0
    assert not snap.demand[events.by_label("CROSS3").index - 1].requested
    assert [b.approach for b in snap.beacons] == [3]
    ap.clear_beacons()
    assert ap.control_snapshot(events, at_s=6.0).beacons == ()

    ap.pedestrians_served(2)
    assert ap.pedestrian_waiting(2) == 0


def test_access_point_congestion_log():
    geom = LaneGeometry(lane="S1", span_m=20.0, spacing_m=4.0)
    ap = AccessPoint([geom], lane_of_street={1: "S1"},
                     congestion_threshold_m=10.0)
    occ = geom.build_array()
    occ.occupied_since = [0.0] * 6
    ap.ingest_window("S1", [], occ, "red", 0.0, 5.0)
    occ2 = geom.build_array()
    occ2.occupied_since = [5.0] * 6
    ap.ingest_window("S1", [], occ2, "red", 5.0, 10.0)
    assert len(ap.congestion_log) == 1
    assert ap.congestion_log[0].lane == "S1"


def test_access_point_rejects_unknown_lane_mapping():
    geom = LaneGeometry(lane="S1")
    with pytest.raises(ValueError, match="unknown lane"):
        AccessPoint([geom], lane_of_street={1: "S9"})
