"""Discrete-time intersection world: agents, signal phases, steering.

Advancing a world with equal seeds and steer inputs reproduces identical
state streams: agent updates run in sorted agent-id order, all randomness
comes from one seeded generator owned by the world, and the clock is an
exact multiple of the fixed dt.
"""

from __future__ import annotations

import hashlib
import math
import random
import struct
from dataclasses import dataclass, field
from typing import Optional

from ..geometry import MetricPoint
from ..scenario import Scenario, SignalSpec
from ..signals import SignalState


@dataclass
class SimAgent:
    agent_id: str
    obj_class: str
    position: MetricPoint
    heading_deg: float
    speed_mps: float
    steered: bool
    waypoints: list[MetricPoint] = field(default_factory=list)
    wp_index: int = 0
    loop: bool = False
    wave_intervals: list[tuple[float, float]] = field(default_factory=list)
    waving_commanded: bool = False
    hint: int = 0  # stable integer identity for evaluation logs

    def is_waving(self, t: float) -> bool:
        if self.steered:
            return self.waving_commanded
        return any(t0 <= t < t1 for t0, t1 in self.wave_intervals)


@dataclass(frozen=True)
class SteerInput:
    turn_dps: Optional[float] = None
    speed_mps: Optional[float] = None
    set_heading_deg: Optional[float] = None
    waving: Optional[bool] = None


class World:
    """Simulated street intersection advancing at a fixed dt."""

    def __init__(self, scenario: Scenario, seed: Optional[int] = None):
        self.scenario = scenario
        self.dt = scenario.general.dt
        self.t = 0.0
        self.frame_id = 0
        self.seed = scenario.general.seed if seed is None else seed
        self.rng = random.Random(self.seed)
        ppm = scenario.general.pixels_per_meter
        self.agents: dict[str, SimAgent] = {}
        for idx, spec in enumerate(sorted(scenario.agents, key=lambda a: a.agent_id)):
            waypoints = [MetricPoint(x / ppm, y / ppm) for x, y in spec.waypoints_px]
            start = waypoints[0]
            heading = 0.0
            if len(waypoints) > 1:
                heading = _bearing_safe(start, waypoints[1])
            self.agents[spec.agent_id] = SimAgent(
                agent_id=spec.agent_id,
                obj_class=spec.obj_class,
                position=start,
                heading_deg=heading,
                speed_mps=spec.speed_mps,
                steered=spec.steered,
                waypoints=waypoints,
                wp_index=1 if len(waypoints) > 1 else 0,
                loop=spec.loop,
                wave_intervals=list(spec.wave_intervals),
                hint=idx + 1,
            )
        self.signals: dict[str, SignalSpec] = dict(scenario.signals)
        self._pending_steer: list[SteerInput] = []

    # -- control ------------------------------------------------------------

    def steered_agent(self) -> Optional[SimAgent]:
        for agent in self.agents.values():
            if agent.steered:
                return agent
        return None

    def apply_steer(self, steer: SteerInput):
        self._pending_steer.append(steer)

    def place_agent(self, agent_id: str, position: MetricPoint, heading_deg: float = 0.0):
        agent = self.agents[agent_id]
        agent.position = position
        agent.heading_deg = heading_deg % 360.0
        agent.speed_mps = 0.0 if agent.steered else agent.speed_mps

    # -- dynamics -----------------------------------------------------------

    def step(self):
        """Advance one tick: apply steering, move agents, advance the clock."""
        steered = self.steered_agent()
        if steered is not None:
            for steer in self._pending_steer:
                if steer.waving is not None:
                    steered.waving_commanded = steer.waving
                if steer.set_heading_deg is not None:
                    steered.heading_deg = steer.set_heading_deg % 360.0
                if steer.turn_dps is not None:
                    steered.heading_deg = (
                        steered.heading_deg + steer.turn_dps * self.dt
                    ) % 360.0
                if steer.speed_mps is not None:
                    steered.speed_mps = max(0.0, steer.speed_mps)
        self._pending_steer.clear()

        for agent_id in sorted(self.agents):
            agent = self.agents[agent_id]
            if agent.steered:
                self._move_steered(agent)
            else:
                self._move_scripted(agent)

        self.frame_id += 1
        self.t = self.frame_id * self.dt

    def _move_steered(self, agent: SimAgent):
        if agent.speed_mps <= 0.0:
            return
        d = agent.speed_mps * self.dt
        rad = math.radians(agent.heading_deg)
        agent.position = MetricPoint(
            agent.position.x + d * math.sin(rad),
            agent.position.y - d * math.cos(rad),
        )

    def _move_scripted(self, agent: SimAgent):
        if agent.speed_mps <= 0.0 or agent.wp_index >= len(agent.waypoints):
            return
        budget = agent.speed_mps * self.dt
        while budget > 1e-12 and agent.wp_index < len(agent.waypoints):
            target = agent.waypoints[agent.wp_index]
            dist = agent.position.distance_to(target)
            if dist <= budget:
                agent.position = target
                budget -= dist
                agent.wp_index += 1
                if agent.wp_index >= len(agent.waypoints) and agent.loop:
                    agent.wp_index = 0
            else:
                agent.heading_deg = _bearing_safe(agent.position, target)
                frac = budget / dist
                agent.position = MetricPoint(
                    agent.position.x + (target.x - agent.position.x) * frac,
                    agent.position.y + (target.y - agent.position.y) * frac,
                )
                budget = 0.0

    # -- signals -------------------------------------------------------------

    def signal_state(self, signal_id: str, t: Optional[float] = None) -> SignalState:
        spec = self.signals[signal_id]
        tau = ((t if t is not None else self.t) + spec.offset_s) % spec.cycle_s
        return SignalState.WALK if tau < spec.walk_s else SignalState.WAIT

    def signal_remaining_truth(self, signal_id: str, t: Optional[float] = None) -> float:
        spec = self.signals[signal_id]
        now = t if t is not None else self.t
        tau = (now + spec.offset_s) % spec.cycle_s
        if tau < spec.walk_s:
            return spec.walk_s - tau
        return spec.cycle_s - tau

    # -- identity ------------------------------------------------------------

    def state_hash(self) -> str:
        """Bit-exact digest of the dynamic state, for determinism checks."""
        h = hashlib.sha256()
        h.update(struct.pack(">dq", self.t, self.frame_id))
        for agent_id in sorted(self.agents):
            a = self.agents[agent_id]
            h.update(agent_id.encode())
            h.update(
                struct.pack(
                    ">dddd?q",
                    a.position.x,
                    a.position.y,
                    a.heading_deg,
                    a.speed_mps,
                    a.waving_commanded,
                    a.wp_index,
                )
            )
        return h.hexdigest()


def _bearing_safe(a: MetricPoint, b: MetricPoint) -> float:
    dx = b.x - a.x
    dy = b.y - a.y
    if abs(dx) < 1e-12 and abs(dy) < 1e-12:
        return 0.0
    return math.degrees(math.atan2(dx, -dy)) % 360.0
