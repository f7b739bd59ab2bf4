"""Headless run loop, detection-log export, and run-log replay.

The headless loop is strictly single-threaded and virtual-clocked: per
tick, the agent acts on last tick's feedback, steering is applied, the
camera renders, and the pipeline processes the frame. Every message and
truth record lands in the run log, so a run is fully reproducible from
(scenario, seed) and fully replayable from its log.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..broker import Broker, Subscriber
from ..geometry import MetricPoint
from ..mapgraph import insert_start, shortest_path
from ..metrics import (
    RUNLOG_SCHEMA,
    RunLogWriter,
    detection_to_record,
    load_run_log,
    measure,
    record_to_detection,
    record_to_wire,
    truth_to_record,
)
from ..pipeline import NavigationPipeline, SimFrame
from ..scenario import RouteSpec, Scenario
from ..wire import SIM_CONTROL_TOPIC, SIM_STATE_TOPIC, WireMessage
from .agent import CompliantAgent
from .camera import CameraModel, NoiseModel, render_detections, synth_signal_crop
from .world import SteerInput, World

logger = logging.getLogger(__name__)

MAX_SIM_SECONDS = 900.0


@dataclass
class RouteRun:
    name: str
    arrived: bool
    sim_seconds: float
    failed: Optional[str]


def _routes_for(scenario: Scenario) -> list[RouteSpec]:
    if scenario.routes:
        return list(scenario.routes)
    steered = scenario.steered_agent()
    if steered is None:
        return []
    start = steered.waypoints_px[0]
    graph = scenario.build_graph()
    return [
        RouteSpec(name=poi.name or str(poi.node_id), start_px=start, dest_node_id=poi.node_id)
        for poi in graph.pois()
    ]


class HeadlessRunner:
    """Runs the compliant agent over every route and produces the report."""

    def __init__(
        self,
        scenario: Scenario,
        seed: Optional[int] = None,
        log_path: Optional[str | Path] = None,
        detlog_path: Optional[str | Path] = None,
        max_sim_seconds: float = MAX_SIM_SECONDS,
    ):
        self.scenario = scenario
        self.seed = scenario.general.seed if seed is None else seed
        self.log = RunLogWriter(log_path)
        self.detlog_path = Path(detlog_path) if detlog_path else None
        self.max_sim_seconds = max_sim_seconds
        self.route_runs: list[RouteRun] = []

    def run(self) -> dict:
        routes = _routes_for(self.scenario)
        if not routes:
            raise ValueError("scenario has no routes and no steered agent + POIs")
        detlog_lines: list[str] = []
        # the exported detections log reads as one continuous recording:
        # route runs are offset with a gap long enough to retire all tracks
        frame_offset = 0
        for route in routes:
            last_frame = self._run_route(route, detlog_lines, frame_offset)
            frame_offset = last_frame + 50
        self.log.close()
        if self.detlog_path:
            self.detlog_path.write_text("".join(detlog_lines))
        return measure(self.log.records)

    # -- one route ---------------------------------------------------------

    def _run_route(self, route: RouteSpec, detlog_lines: list[str], frame_offset: int = 0) -> int:
        scenario = self.scenario
        broker = Broker()
        world = World(scenario, seed=self.seed)
        steered = world.steered_agent()
        if steered is None:
            raise ValueError("scenario needs a steered agent for headless runs")
        ppm = scenario.general.pixels_per_meter
        world.place_agent(
            steered.agent_id,
            MetricPoint(route.start_px[0] / ppm, route.start_px[1] / ppm),
        )

        calibration = scenario.fit_calibration()
        camera = CameraModel.from_scenario(scenario, calibration)
        noise = NoiseModel(scenario.noise)
        clock_ms = lambda: int(round(world.t * 1000))
        pipeline = NavigationPipeline(scenario, broker, clock_ms, calibration=calibration)
        session_id = f"route-{route.name}"
        agent = CompliantAgent(
            session_id,
            broker,
            clock_ms,
            dest_poi_id=route.dest_node_id,
            compass_offset_deg=scenario.general.compass_offset_deg,
        )

        control_sub: Subscriber = broker.attach("runner-control", maxlen=1024)
        broker.subscribe(control_sub, SIM_CONTROL_TOPIC)
        tap: Subscriber = broker.attach("runner-tap", maxlen=100000)
        for pattern in ("session/+/uplink", "session/+/feedback", SIM_CONTROL_TOPIC, SIM_STATE_TOPIC):
            broker.subscribe(tap, pattern)

        graph = pipeline.graph
        overlay = insert_start(graph, world.agents[steered.agent_id].position)
        planned = shortest_path(overlay, route.dest_node_id)
        polyline = [(overlay.position.x, overlay.position.y)] if overlay.anchor_node is None else []
        polyline += [
            (leg.to_pos.x, leg.to_pos.y) for leg in planned.legs
        ]
        if planned.legs:
            polyline.insert(0, (planned.legs[0].from_pos.x, planned.legs[0].from_pos.y))
        dest_pos = graph.metric_position(route.dest_node_id)

        self.log.write(
            {
                "kind": "meta",
                "schema": RUNLOG_SCHEMA,
                "scenario": scenario.general.name,
                "seed": self.seed,
                "route": route.name,
                "session_id": session_id,
                "dest": route.dest_node_id,
                "dest_name": planned.destination_name,
                "dest_pos_m": [dest_pos.x, dest_pos.y],
                "user_agent": steered.agent_id,
                "shortest_m": planned.total_length_m,
                "route_polyline": polyline,
                "calibration_residual_m": calibration.residual_rmse_m,
                "frame_rate_hz": scenario.general.frame_rate_hz,
                "pixels_per_meter": ppm,
            }
        )

        max_frames = int(self.max_sim_seconds * scenario.general.frame_rate_hz)
        arrived = False
        while world.frame_id < max_frames:
            t = world.t
            agent.tick(t)
            if agent.arrived:
                arrived = True
                break
            if agent.failed:
                break
            for msg in control_sub.drain():
                world.apply_steer(_steer_from_msg(msg))

            detections, truth = render_detections(world, camera, noise, world.rng)
            crops = {
                sid: synth_signal_crop(spec, world.signal_state(sid))
                for sid, spec in scenario.signals.items()
            }
            frame = SimFrame(
                frame_id=world.frame_id,
                t=t,
                detections=detections,
                signal_crops=crops,
                truth=truth,
            )
            states = pipeline.process_frame(frame)

            est = None
            ctx = pipeline.sessions.get(session_id)
            if ctx is not None and ctx.session.bound_track_id is not None:
                track = pipeline.store.tracks.get(ctx.session.bound_track_id)
                if track is not None:
                    est = [track.feet_metric.x, track.feet_metric.y]
            self.log.write(
                {
                    "kind": "frame",
                    "route": route.name,
                    "frame": frame.frame_id,
                    "t": t,
                    "truth": [truth_to_record(o) for o in truth],
                    "detections": [detection_to_record(d) for d in detections],
                    "signal_obs": states,
                    "est_user": est,
                }
            )
            for msg in tap.drain():
                self.log.write(
                    {
                        "kind": "wire",
                        "route": route.name,
                        "frame": frame.frame_id,
                        "dir": _direction_of(msg),
                        "msg": msg.to_dict(),
                    }
                )
            for det in detections:
                hint = "" if det.source_track_hint is None else f" {det.source_track_hint}"
                detlog_lines.append(
                    f"{det.frame_id + frame_offset} {det.obj_class} "
                    f"{det.bbox.x_min!r} {det.bbox.y_min!r} "
                    f"{det.bbox.x_max!r} {det.bbox.y_max!r} {det.confidence!r} "
                    f"{det.gesture.value}{hint}\n"
                )
            world.step()

        self.route_runs.append(
            RouteRun(route.name, arrived, world.t, agent.failed)
        )
        if agent.failed:
            logger.warning("route %s failed: %s", route.name, agent.failed)
        return frame_offset + world.frame_id


def _steer_from_msg(msg: WireMessage) -> SteerInput:
    p = msg.payload
    return SteerInput(
        turn_dps=p.get("turn_dps"),
        speed_mps=p.get("speed_mps"),
        set_heading_deg=p.get("set_heading_deg"),
        waving=p.get("waving"),
    )


def _direction_of(msg: WireMessage) -> str:
    if msg.topic.endswith("/uplink"):
        return "uplink"
    if msg.topic.endswith("/feedback"):
        return "feedback"
    if msg.topic == SIM_CONTROL_TOPIC:
        return "control"
    return "state"


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------


def replay_run_log(records: list[dict], scenario: Scenario) -> dict:
    """Re-run the pipeline over a run log's inputs and compare feedback.

    Feeds the logged uplink messages and frame inputs (detections +
    classified signal states) through a fresh pipeline per route, then
    compares the produced feedback messages with the logged ones. Returns
    {"routes": [...], "identical": bool, "messages": N, "mismatches": [...]}
    """
    routes = [r["route"] for r in records if r.get("kind") == "meta"]
    out_routes = []
    all_identical = True
    total = 0
    for route_name in routes:
        frames = [
            r for r in records if r.get("kind") == "frame" and r.get("route") == route_name
        ]
        wires = [
            r for r in records if r.get("kind") == "wire" and r.get("route") == route_name
        ]
        uplink_by_frame: dict[int, list[dict]] = {}
        logged_feedback: list[dict] = []
        for w in wires:
            if w["dir"] == "uplink":
                uplink_by_frame.setdefault(w["frame"], []).append(w["msg"])
            elif w["dir"] == "feedback":
                logged_feedback.append(w["msg"])

        broker = Broker()
        clock = {"t": 0.0}
        pipeline = NavigationPipeline(
            scenario, broker, lambda: int(round(clock["t"] * 1000))
        )
        tap = broker.attach("replay-tap", maxlen=1000000)
        broker.subscribe(tap, "session/+/feedback")

        produced: list[dict] = []
        for fr in frames:
            clock["t"] = fr["t"]
            for raw in uplink_by_frame.get(fr["frame"], []):
                broker.route(record_to_wire(raw))
            frame = SimFrame(
                frame_id=fr["frame"],
                t=fr["t"],
                detections=[record_to_detection(d) for d in fr["detections"]],
                signal_states=fr.get("signal_obs", {}),
            )
            pipeline.process_frame(frame)
            produced.extend(m.to_dict() for m in tap.drain())

        mismatches = []
        for i, (a, b) in enumerate(zip(logged_feedback, produced)):
            if a != b:
                mismatches.append({"index": i, "logged": a, "replayed": b})
                if len(mismatches) >= 5:
                    break
        if len(logged_feedback) != len(produced):
            mismatches.append(
                {"count_logged": len(logged_feedback), "count_replayed": len(produced)}
            )
        identical = not mismatches
        all_identical = all_identical and identical
        total += len(logged_feedback)
        out_routes.append(
            {
                "route": route_name,
                "messages": len(logged_feedback),
                "identical": identical,
                "mismatches": mismatches,
            }
        )
    return {"routes": out_routes, "identical": all_identical, "messages": total}


def replay_detection_log(path: str | Path, scenario: Scenario) -> dict:
    """Feed a plain detections log through tracking + binding only.

    Line grammar: `frame_id class x_min y_min x_max y_max confidence
    gesture [hint]`, '#' comments. Returns a tracking summary.
    """
    from ..geometry import BoundingBox
    from ..tracking import (
        BindingConfig,
        BindingMonitor,
        BindingStatus,
        Detection,
        Gesture,
        TrackStore,
        TrackerConfig,
    )

    calibration = scenario.fit_calibration()
    store = TrackStore(
        calibration, TrackerConfig(frame_rate_hz=scenario.general.frame_rate_hz)
    )
    graph = scenario.build_graph()
    monitor = BindingMonitor(
        store,
        BindingConfig(
            gesture_fpr=scenario.noise.gesture_fpr, gesture_fnr=scenario.noise.gesture_fnr
        ),
    )
    by_frame: dict[int, list] = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (8, 9):
            raise ValueError(f"{path}:{ln}: expected 8 or 9 fields, got {len(parts)}")
        det = Detection(
            frame_id=int(parts[0]),
            obj_class=parts[1],
            bbox=BoundingBox(*(float(v) for v in parts[2:6])),
            confidence=float(parts[6]),
            gesture=Gesture(parts[7]),
            source_track_hint=int(parts[8]) if len(parts) == 9 else None,
        )
        by_frame.setdefault(det.frame_id, []).append(det)

    dt = scenario.general.dt
    monitor.request(0.0)
    bindings = []
    max_tracks = 0
    total_ids = 0
    seen_ids: set[int] = set()
    for frame_id in sorted(by_frame):
        t = frame_id * dt
        tracks = store.ingest_frame(frame_id, by_frame[frame_id])
        max_tracks = max(max_tracks, len(tracks))
        for tr in tracks:
            if tr.track_id not in seen_ids:
                seen_ids.add(tr.track_id)
                total_ids += 1
        result = monitor.poll(t, corner_label_for=lambda tr: graph.corner_label(tr.feet_map))
        if result.status is BindingStatus.BOUND:
            bindings.append(
                {"frame": frame_id, "track_id": result.track_id, "corner": result.corner_label}
            )
            monitor.excluded.add(result.track_id)
            monitor.request(t)  # keep watching; the log may hold several sessions
        elif result.status in (BindingStatus.AMBIGUOUS, BindingStatus.TIMEOUT):
            bindings.append({"frame": frame_id, "status": result.status.value})
            monitor.request(t)
    return {
        "frames": len(by_frame),
        "track_ids_issued": total_ids,
        "max_live_tracks": max_tracks,
        "binding_events": bindings,
    }
