"""Per-user navigation session: instructions, veering, obstacles, crossings.

Headings and bearings are map-frame compass degrees (0 = map north = -y,
clockwise positive). Veer is signed heading-minus-bearing wrapped into
(-180, 180]: negative means the user drifted left of the line to the leg
target, positive right. The anti-veer beep is spatialized on the opposite
side (veer left -> beep from the right speaker) and its rate grows linearly
from beep_rate_min at the tolerance angle to beep_rate_max at 180 degrees.

The session phase machine:

    UNBOUND -> BINDING -> SELECTING -> NAVIGATING <-> CROSSING -> ARRIVED

with SUSPENDED reachable from any bound phase on tracking loss, returning
to NAVIGATING/SELECTING on re-acquisition or to BINDING when the user must
wave again. ARRIVED accepts a new destination (back to NAVIGATING or
SELECTING). Any transition outside ALLOWED_TRANSITIONS is a bug and raises.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import UndefinedBearingError
from .geometry import MapPoint, MetricPoint, meters_to_feet
from .mapgraph import IntersectionGraph, Route, RouteLeg, bearing_deg, wrap_angle_deg
from .signals import Advisory, AdvisoryKind, CrossingConfig, CycleTimer, SignalState
from .tracking import Track

SPOKEN_CLASS = {
    "pedestrian": "Person",
    "car": "Car",
    "bicycle": "Bicycle",
    "bus": "Bus",
    "truck": "Truck",
    "pole": "Pole",
    "trash_can": "Trash can",
    "bench": "Bench",
}


class Phase(enum.Enum):
    UNBOUND = "UNBOUND"
    BINDING = "BINDING"
    SELECTING = "SELECTING"
    NAVIGATING = "NAVIGATING"
    CROSSING = "CROSSING"
    SUSPENDED = "SUSPENDED"
    ARRIVED = "ARRIVED"


ALLOWED_TRANSITIONS: frozenset[tuple[Phase, Phase]] = frozenset(
    {
        (Phase.UNBOUND, Phase.BINDING),
        (Phase.BINDING, Phase.SELECTING),
        (Phase.BINDING, Phase.NAVIGATING),  # re-bind with a route still active
        (Phase.BINDING, Phase.UNBOUND),  # timeout / disconnect
        (Phase.SELECTING, Phase.NAVIGATING),
        (Phase.SELECTING, Phase.ARRIVED),  # destination == current position
        (Phase.NAVIGATING, Phase.CROSSING),
        (Phase.CROSSING, Phase.NAVIGATING),
        (Phase.NAVIGATING, Phase.ARRIVED),
        (Phase.CROSSING, Phase.ARRIVED),
        (Phase.SELECTING, Phase.SUSPENDED),
        (Phase.NAVIGATING, Phase.SUSPENDED),
        (Phase.CROSSING, Phase.SUSPENDED),
        (Phase.SUSPENDED, Phase.NAVIGATING),
        (Phase.SUSPENDED, Phase.SELECTING),
        (Phase.SUSPENDED, Phase.BINDING),
        (Phase.ARRIVED, Phase.NAVIGATING),
        (Phase.ARRIVED, Phase.SELECTING),
        (Phase.ARRIVED, Phase.SUSPENDED),
    }
)


@dataclass(frozen=True)
class VeerConfig:
    tolerance_deg: float = 50.0
    beep_rate_min_hz: float = 1.0
    beep_rate_max_hz: float = 8.0
    haptic_interval_s: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.tolerance_deg < 90.0:
            raise ValueError("tolerance angle must be in (0, 90)")


@dataclass(frozen=True)
class ObstacleConfig:
    alert_radius_ft: float = 4.0
    cooldown_s: float = 3.0

    def __post_init__(self):
        if self.alert_radius_ft <= 0:
            raise ValueError("alert radius must be > 0")


@dataclass(frozen=True)
class GuidanceConfig:
    veer: VeerConfig = field(default_factory=VeerConfig)
    obstacle: ObstacleConfig = field(default_factory=ObstacleConfig)
    crossing: CrossingConfig = field(default_factory=CrossingConfig)
    waypoint_radius_m: float = 1.5
    curb_release_m: float = 1.0  # distance from the curb that counts as "crossing"
    reacquire_radius_m: float = 2.0
    reacquire_window_s: float = 5.0


@dataclass(frozen=True)
class FeedbackEvent:
    kind: str  # overview|instruction|veer_beep|haptic_pulse|obstacle|crossing|arrival|tracking_lost
    utterance: str = ""
    data: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# pure feedback rules
# ---------------------------------------------------------------------------

def compute_veer(user_heading: float, user_pos: MetricPoint, leg_target: MetricPoint) -> float:
    """Signed veer angle in (-180, 180]; negative = veered left."""
    if not math.isfinite(user_heading):
        raise ValueError("heading must be finite")
    target_bearing = bearing_deg(user_pos, leg_target)
    return wrap_angle_deg(user_heading - target_bearing)


def veer_feedback(veer: float, config: VeerConfig = VeerConfig()) -> FeedbackEvent:
    """Haptic reinforcement within tolerance, opposite-side beep beyond it."""
    if abs(veer) <= config.tolerance_deg:
        return FeedbackEvent("haptic_pulse", data={"veer_deg": veer})
    side = "right" if veer < 0 else "left"
    excess = abs(veer) - config.tolerance_deg
    span = 180.0 - config.tolerance_deg
    rate = config.beep_rate_min_hz + (config.beep_rate_max_hz - config.beep_rate_min_hz) * (
        excess / span
    )
    return FeedbackEvent(
        "veer_beep",
        data={"side": side, "rate_hz": rate, "veer_deg": veer},
    )


def obstacle_direction(rel_bearing: float) -> str:
    """Quadrant name for a relative bearing in (-180, 180]."""
    if abs(rel_bearing) <= 45.0:
        return "front"
    if 45.0 < rel_bearing <= 135.0:
        return "right"
    if abs(rel_bearing) > 135.0:
        return "back"
    return "left"


def obstacle_scan(
    user_pos: MetricPoint,
    user_heading: float,
    user_track_id: Optional[int],
    tracks: list[Track],
    config: ObstacleConfig,
    t: float,
    cooldowns: dict[int, float],
) -> list[FeedbackEvent]:
    """Alert once per cooldown for every track within the alert radius."""
    events = []
    radius_m = config.alert_radius_ft * 0.3048
    for track in tracks:
        if track.track_id == user_track_id:
            continue
        d_m = user_pos.distance_to(track.feet_metric)
        if d_m > radius_m:
            continue
        last = cooldowns.get(track.track_id)
        if last is not None and t - last < config.cooldown_s:
            continue
        try:
            rel = wrap_angle_deg(bearing_deg(user_pos, track.feet_metric) - user_heading)
        except UndefinedBearingError:
            continue
        direction = obstacle_direction(rel)
        d_ft = int(round(meters_to_feet(d_m)))
        label = SPOKEN_CLASS.get(track.obj_class, track.obj_class)
        cooldowns[track.track_id] = t
        events.append(
            FeedbackEvent(
                "obstacle",
                utterance=f"Caution! {label}, {d_ft} ft. to the {direction}.",
                data={
                    "category": track.obj_class,
                    "distance_ft": d_ft,
                    "direction": direction,
                    "track_id": track.track_id,
                },
            )
        )
    return events


def _leg_phrase(leg: RouteLeg, turn_word: Optional[str]) -> str:
    dist_ft = int(round(meters_to_feet(leg.length_m)))
    action = (
        f"cross the street, {dist_ft} feet, to {leg.to_label}"
        if leg.kind == "crosswalk"
        else f"walk {dist_ft} feet to {leg.to_label}"
    )
    if turn_word:
        return f"Turn {turn_word}, then {action}."
    return action[0].upper() + action[1:] + "."


def turn_word_for(delta_deg: float) -> Optional[str]:
    """Spoken turn direction for a bearing change; None for straight-on."""
    if abs(delta_deg) > 135.0:
        return "around"
    if delta_deg >= 45.0:
        return "right"
    if delta_deg <= -45.0:
        return "left"
    return None


def leg_instruction(route: Route, leg_index: int) -> FeedbackEvent:
    leg = route.legs[leg_index]
    turn = None
    if leg_index > 0:
        delta = wrap_angle_deg(leg.bearing_deg - route.legs[leg_index - 1].bearing_deg)
        turn = turn_word_for(delta)
    return FeedbackEvent(
        "instruction",
        utterance=_leg_phrase(leg, turn),
        data={
            "leg_index": leg_index,
            "bearing_deg": leg.bearing_deg,
            "length_m": leg.length_m,
            "kind": leg.kind,
            "to_label": leg.to_label,
            "signal_id": leg.signal_id,
        },
    )


def route_overview(route: Route) -> FeedbackEvent:
    """One-utterance summary of the whole route before walking starts."""
    total_ft = int(round(meters_to_feet(route.total_length_m)))
    crossings = sum(1 for leg in route.legs if leg.kind == "crosswalk")
    text = f"Walk {total_ft} feet to {route.destination_name}"
    if crossings:
        text += f"; cross {crossings} street" + ("s" if crossings > 1 else "")
    text += "."
    return FeedbackEvent(
        "overview",
        utterance=text,
        data={
            "total_length_m": route.total_length_m,
            "legs": len(route.legs),
            "crossings": crossings,
            "destination": route.destination_name,
            # metric polyline so clients can draw the route
            "leg_list": [
                {
                    "x0": leg.from_pos.x,
                    "y0": leg.from_pos.y,
                    "x1": leg.to_pos.x,
                    "y1": leg.to_pos.y,
                    "kind": leg.kind,
                }
                for leg in route.legs
            ],
        },
    )


# ---------------------------------------------------------------------------
# session state machine
# ---------------------------------------------------------------------------


class GuidanceSession:
    """Navigation state for one connected user."""

    def __init__(self, session_id: str, graph: IntersectionGraph, config: GuidanceConfig = GuidanceConfig()):
        self.session_id = session_id
        self.graph = graph
        self.config = config
        self.phase = Phase.UNBOUND
        self.bound_track_id: Optional[int] = None
        self.route: Optional[Route] = None
        self.leg_index = 0
        self.last_compass_heading: Optional[float] = None
        self.obstacle_cooldowns: dict[int, float] = {}
        self.last_known_pos: Optional[MetricPoint] = None
        self.lost_at: Optional[float] = None
        self._crossing_started_at: Optional[float] = None
        self._last_advisory_at: Optional[float] = None
        self._last_advisory_kind: Optional[AdvisoryKind] = None
        self._last_haptic_at: Optional[float] = None
        self.transitions: list[tuple[Phase, Phase]] = []

    # -- phase bookkeeping ---------------------------------------------------

    def _set_phase(self, new: Phase):
        if new is self.phase:
            return
        if (self.phase, new) not in ALLOWED_TRANSITIONS:
            raise RuntimeError(f"illegal phase transition {self.phase.value} -> {new.value}")
        self.transitions.append((self.phase, new))
        self.phase = new

    # -- lifecycle hooks (driven by the pipeline) -----------------------------

    def on_connect(self):
        if self.phase is Phase.UNBOUND:
            self._set_phase(Phase.BINDING)

    def on_binding_timeout(self):
        self._set_phase(Phase.UNBOUND)

    def on_bound(self, track_id: int):
        self.bound_track_id = track_id
        if self.route is not None:
            self._set_phase(Phase.NAVIGATING)
        else:
            self._set_phase(Phase.SELECTING)

    def on_compass(self, heading_deg: float):
        self.last_compass_heading = heading_deg % 360.0

    def on_tracking_lost(self, t: float) -> FeedbackEvent:
        self.lost_at = t
        self.bound_track_id = None
        self._set_phase(Phase.SUSPENDED)
        return FeedbackEvent(
            "tracking_lost",
            utterance="Tracking lost. Please stop; reconnecting.",
        )

    def on_reacquired(self, track_id: int):
        self.bound_track_id = track_id
        self.lost_at = None
        if self.route is not None:
            self._set_phase(Phase.NAVIGATING)
        else:
            self._set_phase(Phase.SELECTING)

    def on_rewave_required(self):
        self._set_phase(Phase.BINDING)

    def select_destination(self, dest_node_id: int, user_pos: MetricPoint, t: float) -> list[FeedbackEvent]:
        """Plan a route from the user's position; emits overview + first cue."""
        from .mapgraph import insert_start, shortest_path

        overlay = insert_start(self.graph, user_pos)
        route = shortest_path(overlay, dest_node_id)
        self.route = route
        self.leg_index = 0
        self._crossing_started_at = None
        self._last_advisory_at = None
        self._last_advisory_kind = None
        if not route.legs:
            self._set_phase(Phase.ARRIVED)
            return [self._arrival_event(user_pos)]
        self._set_phase(Phase.NAVIGATING)
        events = [route_overview(route), leg_instruction(route, 0)]
        if route.legs[0].kind == "crosswalk":
            self._set_phase(Phase.CROSSING)
        return events

    # -- per-frame step --------------------------------------------------------

    def step(
        self,
        t: float,
        user_pos: Optional[MetricPoint],
        tracks: list[Track],
        timers: dict[str, CycleTimer],
    ) -> list[FeedbackEvent]:
        """Advance guidance for one frame; returns feedback to publish."""
        if self.phase not in (Phase.NAVIGATING, Phase.CROSSING) or user_pos is None:
            return []
        self.last_known_pos = user_pos
        events: list[FeedbackEvent] = []

        events.extend(self._advance(user_pos, t))
        if self.phase in (Phase.NAVIGATING, Phase.CROSSING) and self.route is not None:
            if self.phase is Phase.CROSSING:
                events.extend(self._crossing_feedback(user_pos, t, timers))
            if self.last_compass_heading is not None:
                events.extend(self._veer_feedback_step(user_pos, t))
                events.extend(
                    obstacle_scan(
                        user_pos,
                        self.last_compass_heading,
                        self.bound_track_id,
                        tracks,
                        self.config.obstacle,
                        t,
                        self.obstacle_cooldowns,
                    )
                )
        return events

    # -- internals ---------------------------------------------------------

    def _current_leg(self) -> Optional[RouteLeg]:
        if self.route is None or self.leg_index >= len(self.route.legs):
            return None
        return self.route.legs[self.leg_index]

    def _arrival_event(self, user_pos: MetricPoint) -> FeedbackEvent:
        dest_pos = (
            self.route.legs[-1].to_pos if self.route and self.route.legs else user_pos
        )
        return FeedbackEvent(
            "arrival",
            utterance="Destination reached!",
            data={
                "destination": self.route.destination_name if self.route else "",
                "end_distance_m": user_pos.distance_to(dest_pos),
            },
        )

    def _far_corner_reached(self, leg: RouteLeg, user_pos: MetricPoint) -> bool:
        # geometric completion: inside the far corner's region polygon
        to_node = self.graph.nodes.get(leg.to_node)
        if to_node is None:
            return False
        label = self.graph.corner_label(to_node.position)
        region = self.graph.corner_region(label) if label else None
        if region is None:
            return False
        ppm = self.graph.pixels_per_meter
        return region.contains(MapPoint(user_pos.x * ppm, user_pos.y * ppm))

    def _advance(self, user_pos: MetricPoint, t: float) -> list[FeedbackEvent]:
        events: list[FeedbackEvent] = []
        while True:
            leg = self._current_leg()
            if leg is None:
                break
            reached = user_pos.distance_to(leg.to_pos) <= self.config.waypoint_radius_m
            if not reached and self.phase is Phase.CROSSING and self._crossing_started_at is not None:
                reached = self._far_corner_reached(leg, user_pos)
            if not reached:
                break
            self.leg_index += 1
            self._crossing_started_at = None
            self._last_advisory_at = None
            self._last_advisory_kind = None
            nxt = self._current_leg()
            if nxt is None:
                self._set_phase(Phase.ARRIVED)
                events.append(self._arrival_event(user_pos))
                break
            if nxt.kind == "crosswalk":
                if self.phase is not Phase.CROSSING:
                    self._set_phase(Phase.CROSSING)
            else:
                if self.phase is not Phase.NAVIGATING:
                    self._set_phase(Phase.NAVIGATING)
            events.append(leg_instruction(self.route, self.leg_index))
        return events

    def _leg_progress_m(self, leg: RouteLeg, user_pos: MetricPoint) -> float:
        """Signed distance the user has advanced along the leg from its start."""
        vx = leg.to_pos.x - leg.from_pos.x
        vy = leg.to_pos.y - leg.from_pos.y
        norm = math.hypot(vx, vy)
        if norm <= 0:
            return 0.0
        return ((user_pos.x - leg.from_pos.x) * vx + (user_pos.y - leg.from_pos.y) * vy) / norm

    def _crossing_feedback(
        self, user_pos: MetricPoint, t: float, timers: dict[str, CycleTimer]
    ) -> list[FeedbackEvent]:
        leg = self._current_leg()
        if leg is None or leg.kind != "crosswalk":
            return []
        timer = timers.get(leg.signal_id) if leg.signal_id else None
        in_progress = self._leg_progress_m(leg, user_pos) > self.config.curb_release_m
        if in_progress and self._crossing_started_at is None:
            self._crossing_started_at = t
            self._last_advisory_at = None  # restart cadence from the crossing start

        if timer is None:
            advisory = Advisory(AdvisoryKind.NOT_READY, leg.signal_id or "?")
        else:
            advisory = crossing_advisory_snapshot(timer, self.config.crossing, t, in_progress)

        due = (
            self._last_advisory_at is None
            or advisory.kind is not self._last_advisory_kind
            or t - self._last_advisory_at >= self.config.crossing.repeat_interval_s - 1e-9
        )
        if not due:
            return []
        self._last_advisory_at = t
        self._last_advisory_kind = advisory.kind
        return [advisory_event(advisory)]

    def _veer_feedback_step(self, user_pos: MetricPoint, t: float) -> list[FeedbackEvent]:
        leg = self._current_leg()
        if leg is None:
            return []
        # at the curb waiting, the walk direction is still the leg bearing
        try:
            veer = compute_veer(self.last_compass_heading, user_pos, leg.to_pos)
        except UndefinedBearingError:
            return []
        event = veer_feedback(veer, self.config.veer)
        if event.kind == "haptic_pulse":
            if (
                self._last_haptic_at is not None
                and t - self._last_haptic_at < self.config.veer.haptic_interval_s - 1e-9
            ):
                return []
            self._last_haptic_at = t
            return [event]
        self._last_haptic_at = None
        return [event]


def crossing_advisory_snapshot(
    timer: CycleTimer, config: CrossingConfig, t: float, in_progress: bool
) -> Advisory:
    from .signals import crossing_advisory

    return crossing_advisory(timer, config, t, in_progress)


def advisory_event(advisory: Advisory) -> FeedbackEvent:
    n = int(round(advisory.remaining_s)) if advisory.remaining_s is not None else None
    if advisory.kind is AdvisoryKind.WAIT_WITH_COUNTDOWN:
        text = f"Please wait, signal will change in {n} seconds."
    elif advisory.kind is AdvisoryKind.BEGIN_CROSS:
        text = "You can cross now."
    elif advisory.kind is AdvisoryKind.CONTINUE_WITH_REMAINING:
        text = f"Keep crossing, {n} seconds remaining."
    elif advisory.kind is AdvisoryKind.WAIT_NEXT_CYCLE:
        text = "Not enough time to cross; please wait for the next cycle."
    else:
        text = "Signal timing unavailable; use caution."
    return FeedbackEvent(
        "crossing",
        utterance=text,
        data={
            "advisory": advisory.kind.value,
            "signal_id": advisory.signal_id,
            "remaining_s": advisory.remaining_s,
        },
    )
