import math
import random

import pytest

from streetnav.errors import UndefinedBearingError
from streetnav.geometry import MapPoint, MetricPoint
from streetnav.guidance import (
    ALLOWED_TRANSITIONS,
    FeedbackEvent,
    GuidanceConfig,
    GuidanceSession,
    ObstacleConfig,
    Phase,
    VeerConfig,
    compute_veer,
    leg_instruction,
    obstacle_direction,
    obstacle_scan,
    route_overview,
    turn_word_for,
    veer_feedback,
)
from streetnav.mapgraph import (
    CornerRegion,
    IntersectionGraph,
    MapNode,
    insert_start,
    shortest_path,
)
from streetnav.signals import CycleTimer, SignalState
from streetnav.tracking import Track

import numpy as np


# -- veer computation ------------------------------------------------------------


def test_compute_veer_examples():
    pos = MetricPoint(0, 0)
    north = MetricPoint(0, -10)
    assert compute_veer(0.0, pos, north) == pytest.approx(0.0)
    assert compute_veer(300.0, pos, north) == pytest.approx(-60.0)
    east = MetricPoint(10, 0)  # bearing 90
    assert compute_veer(350.0, pos, MetricPoint(math.sin(math.radians(10)) * 10, -math.cos(math.radians(10)) * 10)) == pytest.approx(-20.0)
    assert compute_veer(90.0, pos, east) == pytest.approx(0.0)


def test_compute_veer_wrap_oracle_all_integer_pairs():
    # oracle: minimal signed angular difference computed trigonometrically
    pos = MetricPoint(0, 0)
    for heading in range(0, 360, 3):
        for bearing in range(0, 360, 3):
            rad = math.radians(bearing)
            target = MetricPoint(10 * math.sin(rad), -10 * math.cos(rad))
            got = compute_veer(float(heading), pos, target)
            want = math.degrees(
                math.atan2(
                    math.sin(math.radians(heading - bearing)),
                    math.cos(math.radians(heading - bearing)),
                )
            )
            # compare as angles: +180 and -180 are the same direction
            assert abs(math.remainder(got - want, 360.0)) < 1e-6, (heading, bearing)
            assert -180.0 < got <= 180.0


def test_compute_veer_coincident_points():
    with pytest.raises(UndefinedBearingError):
        compute_veer(0.0, MetricPoint(1, 1), MetricPoint(1, 1))


# -- veer feedback -----------------------------------------------------------------


def test_veer_feedback_examples():
    cfg = VeerConfig()
    left_veer = veer_feedback(-60.0, cfg)
    assert left_veer.kind == "veer_beep"
    assert left_veer.data["side"] == "right"  # beep opposite the veer side
    assert veer_feedback(0.0, cfg).kind == "haptic_pulse"
    extreme = veer_feedback(180.0, cfg)
    assert extreme.data["rate_hz"] == pytest.approx(cfg.beep_rate_max_hz)
    assert extreme.data["side"] == "left"


def test_veer_feedback_exhaustive_integer_sweep():
    cfg = VeerConfig()
    prev_rate = None
    for v in range(-180, 181):
        event = veer_feedback(float(v), cfg)
        if abs(v) <= cfg.tolerance_deg:
            assert event.kind == "haptic_pulse", v
        else:
            assert event.kind == "veer_beep", v
            assert event.data["side"] == ("right" if v < 0 else "left")
            assert cfg.beep_rate_min_hz - 1e-9 <= event.data["rate_hz"] <= cfg.beep_rate_max_hz + 1e-9
    # monotone non-decreasing in |veer| and continuous at the tolerance edge
    rates = [
        veer_feedback(v / 10.0, cfg).data["rate_hz"]
        for v in range(501, 1801)
    ]
    assert all(b >= a - 1e-12 for a, b in zip(rates, rates[1:]))
    just_over = veer_feedback(cfg.tolerance_deg + 1e-9, cfg)
    assert just_over.data["rate_hz"] == pytest.approx(cfg.beep_rate_min_hz, abs=1e-6)


# -- obstacles ----------------------------------------------------------------------


def _track(tid, x, y, cls="pedestrian"):
    return Track(
        track_id=tid,
        obj_class=cls,
        last_bbox=None,
        feet_map=MapPoint(x * 10, y * 10),
        feet_metric=MetricPoint(x, y),
        last_seen_frame=0,
        first_seen_frame=0,
    )


def test_obstacle_example_car_left():
    # car 3.9 ft away at relative bearing -90 -> "Car, 4 ft. to the left."
    d = 3.9 * 0.3048
    user = MetricPoint(0, 0)
    car = _track(7, -d, 0, "car")  # west of user; heading north -> rel -90
    events = obstacle_scan(user, 0.0, 1, [car], ObstacleConfig(), 0.0, {})
    assert len(events) == 1
    assert events[0].utterance == "Caution! Car, 4 ft. to the left."


def test_obstacle_strict_radius():
    user = MetricPoint(0, 0)
    far = _track(2, 4.1 * 0.3048, 0)
    assert obstacle_scan(user, 0.0, 1, [far], ObstacleConfig(), 0.0, {}) == []
    at_radius = _track(3, 4.0 * 0.3048, 0)
    assert len(obstacle_scan(user, 0.0, 1, [at_radius], ObstacleConfig(), 0.0, {})) == 1


def test_obstacle_cooldown_exactly_one_alert():
    user = MetricPoint(0, 0)
    car = _track(4, 0.9, 0, "car")
    cooldowns = {}
    total = 0
    for i in range(10):  # 10 frames at 10 Hz, cooldown 3 s
        t = i * 0.1
        total += len(obstacle_scan(user, 0.0, 1, [car], ObstacleConfig(), t, cooldowns))
    assert total == 1


def test_obstacle_sectors_partition_dense_grid():
    cfg = ObstacleConfig()
    user = MetricPoint(0, 0)
    radius_m = cfg.alert_radius_ft * 0.3048
    for step in range(0, 360):
        bearing = step + 0.5  # stay off the exact sector boundaries
        for dist_ft in (0.5, 2.0, 3.99, 4.01, 6.0):
            d = dist_ft * 0.3048
            rad = math.radians(bearing)
            track = _track(9, d * math.sin(rad), -d * math.cos(rad))
            events = obstacle_scan(user, 0.0, 1, [track], cfg, 0.0, {})
            if dist_ft <= 4.0:
                assert len(events) == 1, (bearing, dist_ft)
                rel = bearing if bearing <= 180 else bearing - 360
                assert events[0].data["direction"] == obstacle_direction(rel)
            else:
                assert events == [], (bearing, dist_ft)
    # the boundary itself, probed on exact axes: 4.0 ft alerts, 4.1 does not
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        on_edge = _track(9, 4.0 * 0.3048 * dx, 4.0 * 0.3048 * dy)
        past = _track(9, 4.1 * 0.3048 * dx, 4.1 * 0.3048 * dy)
        assert len(obstacle_scan(user, 0.0, 1, [on_edge], cfg, 0.0, {})) == 1
        assert obstacle_scan(user, 0.0, 1, [past], cfg, 0.0, {}) == []
    # every relative bearing maps to exactly one direction
    counts = {"front": 0, "right": 0, "back": 0, "left": 0}
    for b in range(-179, 181):
        counts[obstacle_direction(float(b))] += 1
    assert sum(counts.values()) == 360
    assert counts == {"front": 91, "right": 90, "back": 89, "left": 90}


def test_user_track_excluded():
    user = MetricPoint(0, 0)
    self_track = _track(1, 0.1, 0)
    assert obstacle_scan(user, 0.0, 1, [self_track], ObstacleConfig(), 0.0, {}) == []


# -- instructions and overview ---------------------------------------------------------


def _square_graph():
    # 20 m per side, a poi east then north of it
    nodes = [
        MapNode(1, "corner", MapPoint(0, 0)),
        MapNode(2, "corner", MapPoint(200, 0)),
        MapNode(3, "poi", MapPoint(200, -200), "Roof"),
    ]
    edges = [(1, 2, "sidewalk", None), (2, 3, "sidewalk", None)]
    return IntersectionGraph(nodes, edges, pixels_per_meter=10.0)


def test_turn_word_buckets():
    assert turn_word_for(0.0) is None
    assert turn_word_for(30.0) is None
    assert turn_word_for(90.0) == "right"
    assert turn_word_for(-90.0) == "left"
    assert turn_word_for(180.0) == "around"
    assert turn_word_for(-170.0) == "around"


def test_instruction_says_turn_right_for_plus_90():
    # east leg then a +90 bearing change would be a right turn; here the
    # bearing goes 90 -> 0 (east then north): -90 means a left turn
    graph = _square_graph()
    overlay = insert_start(graph, MetricPoint(0, 0))
    route = shortest_path(overlay, 3)
    assert route.legs[0].bearing_deg == pytest.approx(90.0)
    assert route.legs[1].bearing_deg == pytest.approx(0.0)
    instr = leg_instruction(route, 1)
    assert "Turn left" in instr.utterance
    # mirrored graph: a right turn
    nodes = [
        MapNode(1, "corner", MapPoint(0, 0)),
        MapNode(2, "corner", MapPoint(200, 0)),
        MapNode(3, "poi", MapPoint(200, 200), "Cellar"),
    ]
    graph2 = IntersectionGraph(nodes, [(1, 2, "sidewalk", None), (2, 3, "sidewalk", None)], 10.0)
    route2 = shortest_path(insert_start(graph2, MetricPoint(0, 0)), 3)
    instr2 = leg_instruction(route2, 1)
    assert "Turn right" in instr2.utterance


def test_route_overview_texts():
    graph = _square_graph()
    # one-leg route of 40 ft: 12.192 m = 121.92 px east
    nodes = [
        MapNode(1, "corner", MapPoint(0, 0)),
        MapNode(2, "poi", MapPoint(121.92, 0), "Dest"),
    ]
    g1 = IntersectionGraph(nodes, [(1, 2, "sidewalk", None)], 10.0)
    route = shortest_path(insert_start(g1, MetricPoint(0, 0)), 2)
    text = route_overview(route).utterance
    assert text == "Walk 40 feet to Dest."
    # a route with one crossing mentions it
    nodes2 = [
        MapNode(1, "corner", MapPoint(0, 0)),
        MapNode(2, "corner", MapPoint(140, 0)),
        MapNode(3, "poi", MapPoint(240, 0), "Over"),
    ]
    g2 = IntersectionGraph(
        nodes2,
        [(1, 2, "crosswalk", "sig"), (2, 3, "sidewalk", None)],
        10.0,
    )
    route2 = shortest_path(insert_start(g2, MetricPoint(0, 0)), 3)
    assert "cross 1 street" in route_overview(route2).utterance


# -- session state machine ----------------------------------------------------------


def _session_graph():
    # start corner, curb corner, far corner inside a labeled region, then poi
    nodes = [
        MapNode(1, "corner", MapPoint(0, 0)),
        MapNode(2, "corner", MapPoint(200, 0)),
        MapNode(3, "corner", MapPoint(340, 0)),
        MapNode(4, "poi", MapPoint(440, 0), "Goal"),
    ]
    edges = [
        (1, 2, "sidewalk", None),
        (2, 3, "crosswalk", "sig"),
        (3, 4, "sidewalk", None),
    ]
    regions = [
        CornerRegion("NE", np.array([[320, -20], [360, -20], [360, 20], [320, 20]], float)),
    ]
    return IntersectionGraph(nodes, edges, pixels_per_meter=10.0, corner_regions=regions)


def _ready_timer(walk_s=30.0, wait_s=60.0):
    timer = CycleTimer("sig")
    t = 0.0
    while t < 2.5 * (walk_s + wait_s):
        tau = t % (walk_s + wait_s)
        timer.observe(SignalState.WALK if tau < walk_s else SignalState.WAIT, t)
        t = round(t + 0.1, 10)
    return timer


def test_session_walkthrough_with_crossing_and_arrival():
    graph = _session_graph()
    session = GuidanceSession("s1", graph)
    session.on_connect()
    session.on_bound(track_id=5)
    assert session.phase is Phase.SELECTING

    timer = _ready_timer()
    timers = {"sig": timer}
    t = 270.0  # walk phase starts here (cycle 90)
    events = session.select_destination(4, MetricPoint(0.0, 0.0), t)
    kinds = [e.kind for e in events]
    assert kinds[0] == "overview" and kinds[1] == "instruction"
    assert session.phase is Phase.NAVIGATING
    session.on_compass(90.0)

    emitted = []
    pos = 0.0
    dt = 0.1
    speed = 1.2
    walking = True
    crossing_started = None
    while session.phase is not Phase.ARRIVED and t < 400.0:
        tau = t % 90.0
        timer.observe(SignalState.WALK if tau < 30 else SignalState.WAIT, t)
        events = session.step(t, MetricPoint(pos, 0.0), [], timers)
        emitted.extend((t, e) for e in events)
        for e in events:
            if e.kind == "crossing" and e.data["advisory"] in ("wait_with_countdown", "wait_next_cycle", "not_ready"):
                walking = False
            if e.kind == "crossing" and e.data["advisory"] == "begin_cross":
                walking = True
        if walking:
            pos += speed * dt
        t = round(t + dt, 10)

    assert session.phase is Phase.ARRIVED
    kinds = [e.kind for _, e in emitted]
    assert "arrival" in kinds
    arrive_events = [e for _, e in emitted if e.kind == "arrival"]
    assert arrive_events[0].utterance == "Destination reached!"
    # phase history follows the documented machine
    assert all(t in ALLOWED_TRANSITIONS for t in session.transitions)
    assert (Phase.NAVIGATING, Phase.CROSSING) in session.transitions
    assert (Phase.CROSSING, Phase.NAVIGATING) in session.transitions


def test_crossing_in_progress_announcement_cadence():
    # a 30 m crosswalk gives an in-progress window over 20 s at 1.2 m/s,
    # so the 10 s cadence must produce three evenly spaced announcements
    nodes = [
        MapNode(1, "corner", MapPoint(0, 0)),
        MapNode(2, "corner", MapPoint(200, 0)),
        MapNode(3, "corner", MapPoint(500, 0)),
        MapNode(4, "poi", MapPoint(600, 0), "Goal"),
    ]
    edges = [
        (1, 2, "sidewalk", None),
        (2, 3, "crosswalk", "sig"),
        (3, 4, "sidewalk", None),
    ]
    regions = [CornerRegion("NE", np.array([[480, -20], [520, -20], [520, 20], [480, 20]], float))]
    graph = IntersectionGraph(nodes, edges, 10.0, regions)
    session = GuidanceSession("s2", graph)
    session.on_connect()
    session.on_bound(5)
    timer = _ready_timer(walk_s=40.0, wait_s=50.0)
    timers = {"sig": timer}
    t = 270.0  # walk starts (cycle 90)
    session.select_destination(4, MetricPoint(19.0, 0.0), t)  # 1 m before curb
    session.on_compass(90.0)

    # walk straight across at 1.2 m/s once begin_cross arrives
    pos = 19.0
    walking = False
    continue_times = []
    while t < 360.0 and session.phase is not Phase.ARRIVED:
        tau = t % 90.0
        timer.observe(SignalState.WALK if tau < 40 else SignalState.WAIT, t)
        for e in session.step(t, MetricPoint(pos, 0.0), [], timers):
            if e.kind == "crossing":
                if e.data["advisory"] == "begin_cross":
                    walking = True
                if e.data["advisory"] == "continue_with_remaining":
                    continue_times.append(t)
        if walking:
            pos += 1.2 * 0.1
        t = round(t + 0.1, 10)

    assert len(continue_times) >= 3
    gaps = [round(b - a, 6) for a, b in zip(continue_times, continue_times[1:])]
    assert all(g == pytest.approx(10.0, abs=1e-6) for g in gaps), gaps
    # announcements come at t0, t0+10, ...: exactly floor(duration/10)+1
    duration = continue_times[-1] - continue_times[0]
    assert len(continue_times) == math.floor(duration / 10.0 + 1e-9) + 1


def test_phase_fuzz_random_events():
    rng = random.Random(123)
    graph = _session_graph()
    for trial in range(100):
        session = GuidanceSession(f"f{trial}", graph)
        timers = {"sig": _ready_timer()}
        t = 300.0
        for _ in range(60):
            action = rng.choice(["connect", "bind", "select", "step", "lose", "reacquire", "rewave", "timeout"])
            try:
                if action == "connect" and session.phase is Phase.UNBOUND:
                    session.on_connect()
                elif action == "bind" and session.phase is Phase.BINDING:
                    session.on_bound(rng.randint(1, 9))
                elif action == "timeout" and session.phase is Phase.BINDING:
                    session.on_binding_timeout()
                elif action == "select" and session.phase in (Phase.SELECTING, Phase.ARRIVED):
                    session.select_destination(
                        4, MetricPoint(rng.uniform(0, 44), rng.uniform(-2, 2)), t
                    )
                elif action == "step" and session.phase in (Phase.NAVIGATING, Phase.CROSSING):
                    session.step(t, MetricPoint(rng.uniform(0, 44), rng.uniform(-2, 2)), [], timers)
                elif action == "lose" and session.phase in (Phase.SELECTING, Phase.NAVIGATING, Phase.CROSSING, Phase.ARRIVED):
                    session.on_tracking_lost(t)
                elif action == "reacquire" and session.phase is Phase.SUSPENDED:
                    session.on_reacquired(rng.randint(1, 9))
                elif action == "rewave" and session.phase is Phase.SUSPENDED:
                    session.on_rewave_required()
            except RuntimeError as exc:
                pytest.fail(f"illegal transition attempted: {exc}")
            t = round(t + rng.uniform(0.1, 2.0), 10)
        assert all(tr in ALLOWED_TRANSITIONS for tr in session.transitions)
