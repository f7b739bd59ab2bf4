"""Headless compliant agent: a scripted user who obeys guidance exactly.

The agent acts only on wire feedback, never on world truth: it waves to
bind, picks its assigned destination from the announced POI list, turns to
each instruction's bearing, walks at 1.2 m/s, stops for crossing gates,
and resumes on begin-cross. Heading updates go out as compass messages so
the pipeline can compute veer the same way it would for a phone client.
"""

from __future__ import annotations

import logging
from typing import Optional

from ..broker import Broker, Publisher, Subscriber
from ..wire import SIM_CONTROL_TOPIC, WireMessage, feedback_topic, uplink_topic

logger = logging.getLogger(__name__)

WALK_SPEED_MPS = 1.2
WAVE_DURATION_S = 3.0


class CompliantAgent:
    """Drives the steered world agent through one destination."""

    def __init__(
        self,
        session_id: str,
        broker: Broker,
        clock_ms,
        dest_poi_id: int,
        walk_speed: float = WALK_SPEED_MPS,
        compass_offset_deg: float = 0.0,
    ):
        self.session_id = session_id
        self.dest_poi_id = dest_poi_id
        self.walk_speed = walk_speed
        self.compass_offset_deg = compass_offset_deg
        self.publisher: Publisher = broker.publisher(f"agent-{session_id}", clock_ms)
        self.sub: Subscriber = broker.attach(f"agent-{session_id}", maxlen=1024)
        broker.subscribe(self.sub, feedback_topic(session_id))
        self.state = "idle"
        self.bearing: Optional[float] = None
        self.walking = False
        self.arrived = False
        self.failed: Optional[str] = None
        self._wave_started_at: Optional[float] = None
        self._connect_sent = False
        self._select_sent = False
        self.transcript: list[WireMessage] = []

    # -- helpers ---------------------------------------------------------------

    def _uplink(self, type: str, payload: dict):
        self.publisher.publish(uplink_topic(self.session_id), type, self.session_id, payload)

    def _steer(self, **kwargs):
        self.publisher.publish(SIM_CONTROL_TOPIC, "steer_command", self.session_id, kwargs)

    def _set_motion(self):
        speed = self.walk_speed if self.walking and self.bearing is not None else 0.0
        steer = {"speed_mps": speed}
        if self.bearing is not None:
            steer["set_heading_deg"] = self.bearing
        self._steer(**steer)

    # -- per-tick behaviour -------------------------------------------------------

    def tick(self, t: float):
        for msg in self.sub.drain():
            self.transcript.append(msg)
            self._handle(msg, t)

        if not self._connect_sent:
            self._connect_sent = True
            self._uplink("connect_request", {"client": "compliant-agent"})
            self._uplink("wave_signal", {"waving": True})
            self._steer(waving=True, speed_mps=0.0)
            self._wave_started_at = t
            self.state = "waving"

        if self.state == "waving" and self._wave_started_at is not None:
            if t - self._wave_started_at > WAVE_DURATION_S * 4:
                # wave again; noise may have eaten the first attempt
                self._wave_started_at = t
                self._steer(waving=True)

        # publish compass every tick; heading is the commanded bearing
        if self.bearing is not None:
            device_heading = (self.bearing - self.compass_offset_deg) % 360.0
            self._uplink("compass_update", {"heading_deg": device_heading})

    # -- feedback handling -----------------------------------------------------

    def _handle(self, msg: WireMessage, t: float):
        kind = msg.type
        if kind == "bind_ack":
            self.state = "bound"
            self._uplink("wave_signal", {"waving": False})
            self._steer(waving=False)
            self._wave_started_at = None
        elif kind == "poi_list":
            if not self._select_sent:
                self._select_sent = True
                self._uplink("select_destination", {"poi_id": self.dest_poi_id})
        elif kind == "instruction":
            self.bearing = float(msg.payload["bearing_deg"])
            if msg.payload.get("kind") == "crosswalk":
                # hold at the curb until the advisory clears us
                self.walking = False
                self.state = "at_curb"
            else:
                self.walking = True
                self.state = "walking"
            self._set_motion()
        elif kind == "route_overview":
            self.state = "routed"
        elif kind == "signal_advisory":
            advisory = msg.payload.get("advisory")
            if advisory == "begin_cross":
                self.walking = True
                self.state = "crossing"
            elif advisory in ("wait_with_countdown", "wait_next_cycle", "not_ready"):
                if self.state != "crossing":
                    self.walking = False
            self._set_motion()
        elif kind == "arrival":
            self.arrived = True
            self.walking = False
            self.state = "arrived"
            self._set_motion()
        elif kind == "tracking_lost":
            self.walking = False
            self._set_motion()
            self._steer(waving=True)
            self._wave_started_at = t
            self.state = "waving"
        elif kind == "error":
            code = msg.payload.get("code")
            if code in ("binding_ambiguous", "rebind_required"):
                self._steer(waving=True)
                self._wave_started_at = t
                self.state = "waving"
            elif code == "binding_timeout":
                self._connect_sent = False  # reconnect and retry
            else:
                self.failed = f"{code}: {msg.payload.get('message')}"
