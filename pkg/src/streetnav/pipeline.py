"""Navigation pipeline: frames in, tracks and per-session feedback out.

One pipeline owns the track store, the per-signal cycle timers, and every
guidance session. It consumes frames from the simulator (or a replayed
log), drains client uplink messages queued by the broker thread, and
publishes feedback and world snapshots. All processing happens on the
caller's thread; the broker only ever hands it queued messages.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .broker import Broker, Publisher, Subscriber
from .errors import NoRouteError, StreetNavError
from .geometry import CalibrationModel, MetricPoint
from .guidance import (
    FeedbackEvent,
    GuidanceConfig,
    GuidanceSession,
    Phase,
    leg_instruction,
)
from .mapgraph import CORNER_WORDS, IntersectionGraph
from .scenario import Scenario
from .signals import CycleTimer, SignalState, SignalThresholds, classify_state
from .tracking import (
    BindingConfig,
    BindingMonitor,
    BindingStatus,
    Detection,
    TrackStore,
    TrackerConfig,
)
from .wire import (
    SIM_STATE_TOPIC,
    WireMessage,
    feedback_topic,
)

logger = logging.getLogger(__name__)

SESSION_RESUME_WINDOW_S = 60.0

EVENT_TYPE_BY_KIND = {
    "overview": "route_overview",
    "instruction": "instruction",
    "veer_beep": "veer",
    "haptic_pulse": "haptic",
    "obstacle": "obstacle",
    "crossing": "signal_advisory",
    "arrival": "arrival",
    "tracking_lost": "tracking_lost",
}


@dataclass
class SimFrame:
    """One tick of pipeline input."""

    frame_id: int
    t: float
    detections: list[Detection]
    signal_crops: dict[str, np.ndarray] = field(default_factory=dict)
    signal_states: dict[str, str] = field(default_factory=dict)
    truth: Optional[list] = None  # AgentObservation list or dicts; logging only


@dataclass
class _SessionCtx:
    session: GuidanceSession
    monitor: BindingMonitor
    last_seen_t: float = 0.0
    disconnected_at: Optional[float] = None
    arrivals: int = 0


class NavigationPipeline:
    def __init__(
        self,
        scenario: Scenario,
        broker: Broker,
        clock_ms: Callable[[], int],
        calibration: Optional[CalibrationModel] = None,
        guidance_config: Optional[GuidanceConfig] = None,
        binding_config: Optional[BindingConfig] = None,
        publish_snapshots: bool = True,
    ):
        self.scenario = scenario
        self.broker = broker
        self.calibration = calibration or scenario.fit_calibration()
        self.graph: IntersectionGraph = scenario.build_graph()
        self.store = TrackStore(
            self.calibration,
            TrackerConfig(frame_rate_hz=scenario.general.frame_rate_hz),
        )
        self.timers: dict[str, CycleTimer] = {
            sid: CycleTimer(sid) for sid in scenario.signals
        }
        self.thresholds = SignalThresholds()
        self.guidance_config = guidance_config or GuidanceConfig()
        self.binding_config = binding_config or BindingConfig(
            gesture_fpr=scenario.noise.gesture_fpr,
            gesture_fnr=scenario.noise.gesture_fnr,
        )
        self.sessions: dict[str, _SessionCtx] = {}
        self.publisher: Publisher = broker.publisher("pipeline", clock_ms)
        self.uplink_sub: Subscriber = broker.attach("pipeline-uplink", maxlen=1024)
        broker.subscribe(self.uplink_sub, "session/+/uplink")
        self.publish_snapshots = publish_snapshots
        self.last_t = 0.0

    # -- uplink --------------------------------------------------------------

    def _bound_track_ids(self) -> set[int]:
        return {
            ctx.session.bound_track_id
            for ctx in self.sessions.values()
            if ctx.session.bound_track_id is not None
        }

    def handle_uplink(self, msg: WireMessage, t: float):
        sid = msg.session_id
        if msg.type == "connect_request":
            self._handle_connect(sid, msg, t)
            return
        ctx = self.sessions.get(sid)
        if ctx is None:
            self._publish_error(sid, "unknown_session", "connect first")
            return
        ctx.last_seen_t = t
        if msg.type == "wave_signal":
            pass  # binding is armed by connect; the wave arrives via detections
        elif msg.type == "compass_update":
            heading = float(msg.payload.get("heading_deg", 0.0))
            ctx.session.on_compass(heading + self.scenario.general.compass_offset_deg)
        elif msg.type == "select_destination":
            self._handle_select(ctx, msg, t)
        else:
            logger.debug("session %s: ignoring uplink type %s", sid, msg.type)

    def _handle_connect(self, sid: str, msg: WireMessage, t: float):
        ctx = self.sessions.get(sid)
        resumable = (
            ctx is not None
            and ctx.disconnected_at is not None
            and t - ctx.disconnected_at <= SESSION_RESUME_WINDOW_S
        )
        if ctx is not None and resumable:
            ctx.disconnected_at = None
            ctx.last_seen_t = t
            return
        session = GuidanceSession(sid, self.graph, self.guidance_config)
        monitor = BindingMonitor(
            self.store, self.binding_config, excluded_track_ids=set()
        )
        ctx = _SessionCtx(session=session, monitor=monitor, last_seen_t=t)
        self.sessions[sid] = ctx
        session.on_connect()
        monitor.excluded = self._bound_track_ids()
        monitor.request(t)

    def _handle_select(self, ctx: _SessionCtx, msg: WireMessage, t: float):
        session = ctx.session
        if session.phase not in (Phase.SELECTING, Phase.ARRIVED, Phase.NAVIGATING):
            self._publish_error(session.session_id, "not_ready", f"cannot select in {session.phase.value}")
            return
        track = self.store.tracks.get(session.bound_track_id)
        if track is None:
            self._publish_error(session.session_id, "not_tracked", "user track unavailable")
            return
        poi_id = int(msg.payload["poi_id"])
        try:
            events = session.select_destination(poi_id, track.feet_metric, t)
        except (NoRouteError, StreetNavError) as exc:
            self._publish_error(session.session_id, "no_route", str(exc))
            return
        for event in events:
            self._publish_event(session.session_id, event)

    def mark_disconnected(self, session_id: str, t: float):
        ctx = self.sessions.get(session_id)
        if ctx is not None:
            ctx.disconnected_at = t

    # -- frame processing ------------------------------------------------------

    def process_frame(self, frame: SimFrame):
        t = frame.t
        self.last_t = t
        for msg in self.uplink_sub.drain():
            self.handle_uplink(msg, t)

        tracks = self.store.ingest_frame(frame.frame_id, frame.detections)

        states: dict[str, str] = {}
        for sid, timer in self.timers.items():
            if sid in frame.signal_states:
                state = SignalState(frame.signal_states[sid])
            elif sid in frame.signal_crops:
                state = classify_state(frame.signal_crops[sid], self.thresholds)
            else:
                state = SignalState.UNKNOWN
            states[sid] = state.value
            timer.observe(state, t)

        for sid in sorted(self.sessions):
            self._service_session(self.sessions[sid], frame, t)

        if self.publish_snapshots:
            self._publish_snapshot(frame, states)
        return states

    # -- session servicing -----------------------------------------------------

    def _service_session(self, ctx: _SessionCtx, frame: SimFrame, t: float):
        session = ctx.session
        sid = session.session_id

        if session.phase is Phase.BINDING:
            ctx.monitor.excluded = self._bound_track_ids()
            result = ctx.monitor.poll(
                t, corner_label_for=lambda tr: self.graph.corner_label(tr.feet_map)
            )
            if result.status is BindingStatus.BOUND:
                session.on_bound(result.track_id)
                label = result.corner_label or "?"
                words = CORNER_WORDS.get(label)
                phrase = f"the {words} corner" if words else f"corner {label}"
                self.publisher.publish(
                    feedback_topic(sid),
                    "bind_ack",
                    sid,
                    {
                        "track_id": result.track_id,
                        "corner_label": label,
                        "utterance": f"Connected. You are at {phrase}.",
                    },
                )
                if session.phase is Phase.SELECTING:
                    self._publish_poi_list(ctx)
                elif session.route is not None:
                    self._publish_event(sid, leg_instruction(session.route, session.leg_index))
            elif result.status is BindingStatus.AMBIGUOUS:
                self._publish_error(sid, "binding_ambiguous", "more than one waving pedestrian; please wave again")
                ctx.monitor.request(t)
            elif result.status is BindingStatus.TIMEOUT:
                session.on_binding_timeout()
                self._publish_error(sid, "binding_timeout", "no sustained wave detected")
            return

        if session.bound_track_id is not None:
            track = self.store.tracks.get(session.bound_track_id)
            if track is None:
                event = session.on_tracking_lost(t)
                self._publish_event(sid, event)
                return
            user_pos = track.feet_metric
        else:
            user_pos = None

        if session.phase is Phase.SUSPENDED:
            self._try_reacquire(ctx, t)
            return

        if session.phase in (Phase.NAVIGATING, Phase.CROSSING):
            events = session.step(t, user_pos, self.store.live_tracks, self.timers)
            for event in events:
                self._publish_event(sid, event)
                if event.kind == "arrival":
                    ctx.arrivals += 1

    def _try_reacquire(self, ctx: _SessionCtx, t: float):
        session = ctx.session
        cfg = self.guidance_config
        if session.lost_at is None or session.last_known_pos is None:
            return
        if t - session.lost_at > cfg.reacquire_window_s:
            session.on_rewave_required()
            ctx.monitor.excluded = self._bound_track_ids()
            ctx.monitor.request(t)
            self._publish_error(session.session_id, "rebind_required", "please wave again to reconnect")
            return
        # a replacement track typically spawns while the old one is still
        # coasting toward its miss timeout, so "new" reaches back that far
        lost_frame = session.lost_at * self.scenario.general.frame_rate_hz
        new_since = lost_frame - self.store.config.miss_timeout_frames - 1
        bound_elsewhere = self._bound_track_ids()
        candidates = [
            tr
            for tr in self.store.live_tracks
            if tr.obj_class == "pedestrian"
            and tr.track_id not in bound_elsewhere
            and tr.first_seen_frame >= new_since
            and tr.feet_metric.distance_to(session.last_known_pos) <= cfg.reacquire_radius_m
        ]
        if not candidates:
            return
        best = min(
            (tr for tr in candidates),
            key=lambda tr: (tr.feet_metric.distance_to(session.last_known_pos), tr.track_id),
        )
        session.on_reacquired(best.track_id)
        if session.route is not None and session.phase in (Phase.NAVIGATING, Phase.CROSSING):
            self._publish_event(session.session_id, leg_instruction(session.route, session.leg_index))

    # -- publishing -------------------------------------------------------------

    def _publish_poi_list(self, ctx: _SessionCtx):
        session = ctx.session
        track = self.store.tracks.get(session.bound_track_id)
        user_pos = track.feet_metric if track else MetricPoint(0.0, 0.0)
        pois = [
            {"id": node.node_id, "name": node.name, "distance_m": dist}
            for node, dist in self.graph.list_pois(user_pos)
        ]
        self.publisher.publish(
            feedback_topic(session.session_id),
            "poi_list",
            session.session_id,
            {"pois": pois},
        )

    def _publish_event(self, session_id: str, event: FeedbackEvent):
        msg_type = EVENT_TYPE_BY_KIND[event.kind]
        payload = dict(event.data)
        if event.utterance:
            payload["utterance"] = event.utterance
        if msg_type == "haptic":
            payload = {"veer_deg": event.data.get("veer_deg")}
        if msg_type == "signal_advisory" and payload.get("signal_id") is None:
            payload["signal_id"] = "?"
        self.publisher.publish(feedback_topic(session_id), msg_type, session_id, payload)

    def _publish_error(self, session_id: str, code: str, message: str):
        self.publisher.publish(
            feedback_topic(session_id),
            "error",
            session_id,
            {"code": code, "message": message},
        )

    def _publish_snapshot(self, frame: SimFrame, signal_states: dict[str, str]):
        agents = []
        if frame.truth:
            for obs in frame.truth:
                if hasattr(obs, "agent_id"):
                    agents.append(
                        {
                            "id": obs.agent_id,
                            "kind": obs.obj_class,
                            "x_m": obs.x_m,
                            "y_m": obs.y_m,
                            "heading_deg": obs.heading_deg,
                            "waving": obs.waving,
                            "steered": obs.steered,
                        }
                    )
                else:
                    agents.append(dict(obs))
        detections = [
            {
                "x_min": d.bbox.x_min,
                "y_min": d.bbox.y_min,
                "x_max": d.bbox.x_max,
                "y_max": d.bbox.y_max,
                "kind": d.obj_class,
            }
            for d in frame.detections
        ]
        bound = self._bound_track_ids()
        tracks = [
            {
                "id": tr.track_id,
                "kind": tr.obj_class,
                "x_m": tr.feet_metric.x,
                "y_m": tr.feet_metric.y,
                "bound": tr.track_id in bound,
            }
            for tr in self.store.live_tracks
        ]
        signals = []
        for sid in sorted(self.timers):
            timer = self.timers[sid]
            signals.append(
                {
                    "id": sid,
                    "state": signal_states.get(sid, "unknown"),
                    "remaining_s": timer.remaining(frame.t),
                }
            )
        self.publisher.publish(
            SIM_STATE_TOPIC,
            "world_snapshot",
            "-",
            {
                "t": frame.t,
                "frame_id": frame.frame_id,
                "agents": agents,
                "detections": detections,
                "tracks": tracks,
                "signals": signals,
            },
        )
