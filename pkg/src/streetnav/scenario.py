"""Scenario file parsing: one plain-text document describing a deployment.

A scenario holds everything the server, simulator, and tests need: the map
graph, corner regions, signals, camera calibration and field of view,
agents with movement scripts, noise parameters, and seeds. Grammar (also
documented in the README):

    # comment                     blank lines and '#' comments anywhere
    [general]
    name <str>
    pixels_per_meter <float>
    frame_rate_hz <float>
    camera_resolution <w> <h>
    compass_offset_deg <float>
    seed <int>
    map_size_px <w> <h>

    [calibration]                 either a file reference or inline pairs
    file <relative-path>
    <cam_x> <cam_y> <map_x> <map_y>

    [camera]
    ground_px <x> <y>             camera position projected on the ground
    fov_px <x> <y> <x> <y> ...    field-of-view polygon on the map

    [nodes]                       id kind x y [name...]
    [edges]                       a b kind [signal_id]
    [corners]                     label x y x y ...  (region polygon)
    [signals]                     id walk_s wait_s offset_s crop x y w h
    [agents]                      id class [steered] speed v path x y [; x y]... [loop] [wave t0 t1]...
    [routes]                      name start_x start_y dest_node_id
    [noise]                       bbox_jitter_px v | fnr_anchor d f | gesture_fpr v | gesture_fnr v | ghost_rate v
    [occluders]                   x y x y x y ...  (one polygon per line)

All scenario geometry is authored in map pixels; agent speeds are m/s.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ScenarioError
from .geometry import (
    CalibrationModel,
    MapPoint,
    PixelPoint,
    fit_calibration,
    load_correspondences,
)
from .mapgraph import CornerRegion, IntersectionGraph, MapNode


@dataclass
class GeneralSpec:
    name: str = "unnamed"
    pixels_per_meter: float = 12.0
    frame_rate_hz: float = 10.0
    camera_resolution: tuple[int, int] = (1920, 1080)
    compass_offset_deg: float = 0.0
    seed: int = 1
    map_size_px: tuple[int, int] = (960, 720)

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate_hz


@dataclass
class CameraSpec:
    ground_px: tuple[float, float]
    fov_polygon_px: np.ndarray


@dataclass
class SignalSpec:
    signal_id: str
    walk_s: float
    wait_s: float
    offset_s: float
    crop_rect: tuple[int, int, int, int]  # x, y, w, h in camera pixels

    @property
    def cycle_s(self) -> float:
        return self.walk_s + self.wait_s


@dataclass
class AgentSpec:
    agent_id: str
    obj_class: str
    steered: bool
    speed_mps: float
    waypoints_px: list[tuple[float, float]]
    loop: bool = False
    wave_intervals: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class RouteSpec:
    name: str
    start_px: tuple[float, float]
    dest_node_id: int


@dataclass
class NoiseSpec:
    bbox_jitter_px: float = 0.0
    fnr_anchors: list[tuple[float, float]] = field(default_factory=list)
    gesture_fpr: float = 0.24
    gesture_fnr: float = 0.10
    ghost_rate: float = 0.0


@dataclass
class Scenario:
    general: GeneralSpec
    camera: Optional[CameraSpec]
    calibration_pairs: list[tuple[PixelPoint, MapPoint]]
    nodes: list[MapNode]
    edges: list[tuple[int, int, str, Optional[str]]]
    corner_regions: list[CornerRegion]
    signals: dict[str, SignalSpec]
    agents: list[AgentSpec]
    routes: list[RouteSpec]
    noise: NoiseSpec
    occluders: list[np.ndarray]
    source_path: Optional[Path] = None

    def build_graph(self) -> IntersectionGraph:
        return IntersectionGraph(
            self.nodes, self.edges, self.general.pixels_per_meter, self.corner_regions
        )

    def fit_calibration(self) -> CalibrationModel:
        return fit_calibration(self.calibration_pairs, self.general.pixels_per_meter)

    def steered_agent(self) -> Optional[AgentSpec]:
        for agent in self.agents:
            if agent.steered:
                return agent
        return None


def _floats(parts, n, ln, what):
    if len(parts) != n:
        raise ScenarioError(f"{what}: expected {n} values, got {len(parts)}", ln)
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ScenarioError(f"{what}: {exc}", ln) from exc


def parse_scenario(path: str | Path) -> Scenario:
    """Parse a scenario document; raises ScenarioError with a line number."""
    path = Path(path)
    if not path.is_file():
        raise ScenarioError(f"scenario file not found: {path}")
    general = GeneralSpec()
    camera: Optional[CameraSpec] = None
    cal_pairs: list[tuple[PixelPoint, MapPoint]] = []
    nodes: list[MapNode] = []
    edges: list[tuple[int, int, str, Optional[str]]] = []
    corners: list[CornerRegion] = []
    signals: dict[str, SignalSpec] = {}
    agents: list[AgentSpec] = []
    routes: list[RouteSpec] = []
    noise = NoiseSpec()
    occluders: list[np.ndarray] = []

    ground_px = None
    fov = None
    section = None

    for ln, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            continue
        parts = line.split()
        try:
            if section == "general":
                _parse_general(general, parts, ln)
            elif section == "calibration":
                if parts[0] == "file":
                    cal_pairs.extend(load_correspondences(path.parent / parts[1]))
                else:
                    vals = _floats(parts, 4, ln, "calibration pair")
                    cal_pairs.append((PixelPoint(vals[0], vals[1]), MapPoint(vals[2], vals[3])))
            elif section == "camera":
                if parts[0] == "ground_px":
                    vals = _floats(parts[1:], 2, ln, "ground_px")
                    ground_px = (vals[0], vals[1])
                elif parts[0] == "fov_px":
                    vals = [float(p) for p in parts[1:]]
                    if len(vals) < 6 or len(vals) % 2:
                        raise ScenarioError("fov_px needs >= 3 x,y pairs", ln)
                    fov = np.array(vals, dtype=np.float64).reshape(-1, 2)
                else:
                    raise ScenarioError(f"unknown camera key {parts[0]!r}", ln)
            elif section == "nodes":
                if len(parts) < 4:
                    raise ScenarioError("node needs: id kind x y [name]", ln)
                name = " ".join(parts[4:]) or None
                nodes.append(
                    MapNode(int(parts[0]), parts[1], MapPoint(float(parts[2]), float(parts[3])), name)
                )
            elif section == "edges":
                if len(parts) < 3:
                    raise ScenarioError("edge needs: a b kind [signal_id]", ln)
                signal_id = parts[3] if len(parts) > 3 else None
                edges.append((int(parts[0]), int(parts[1]), parts[2], signal_id))
            elif section == "corners":
                label = parts[0]
                vals = [float(p) for p in parts[1:]]
                if len(vals) < 6 or len(vals) % 2:
                    raise ScenarioError("corner region needs >= 3 x,y pairs", ln)
                corners.append(CornerRegion(label, np.array(vals).reshape(-1, 2)))
            elif section == "signals":
                if len(parts) != 9 or parts[4] != "crop":
                    raise ScenarioError(
                        "signal needs: id walk_s wait_s offset_s crop x y w h", ln
                    )
                spec = SignalSpec(
                    parts[0],
                    float(parts[1]),
                    float(parts[2]),
                    float(parts[3]),
                    (int(parts[5]), int(parts[6]), int(parts[7]), int(parts[8])),
                )
                if spec.walk_s <= 0 or spec.wait_s <= 0:
                    raise ScenarioError("signal durations must be > 0", ln)
                signals[spec.signal_id] = spec
            elif section == "agents":
                agents.append(_parse_agent(parts, ln))
            elif section == "routes":
                if len(parts) != 4:
                    raise ScenarioError("route needs: name start_x start_y dest_node_id", ln)
                routes.append(
                    RouteSpec(parts[0], (float(parts[1]), float(parts[2])), int(parts[3]))
                )
            elif section == "noise":
                _parse_noise(noise, parts, ln)
            elif section == "occluders":
                vals = [float(p) for p in parts]
                if len(vals) < 6 or len(vals) % 2:
                    raise ScenarioError("occluder needs >= 3 x,y pairs", ln)
                occluders.append(np.array(vals).reshape(-1, 2))
            else:
                raise ScenarioError(f"content outside any known section: {line!r}", ln)
        except ScenarioError:
            raise
        except (ValueError, IndexError) as exc:
            raise ScenarioError(str(exc), ln) from exc

    if camera is None and ground_px is not None and fov is not None:
        camera = CameraSpec(ground_px, fov)
    elif (ground_px is None) != (fov is None):
        raise ScenarioError("camera section needs both ground_px and fov_px")

    noise.fnr_anchors.sort()
    scenario = Scenario(
        general=general,
        camera=camera,
        calibration_pairs=cal_pairs,
        nodes=nodes,
        edges=edges,
        corner_regions=corners,
        signals=signals,
        agents=agents,
        routes=routes,
        noise=noise,
        occluders=occluders,
        source_path=path,
    )
    _validate(scenario)
    return scenario


def _parse_general(general: GeneralSpec, parts, ln):
    key = parts[0]
    if key == "name":
        general.name = " ".join(parts[1:])
    elif key == "pixels_per_meter":
        general.pixels_per_meter = float(parts[1])
    elif key == "frame_rate_hz":
        general.frame_rate_hz = float(parts[1])
    elif key == "camera_resolution":
        general.camera_resolution = (int(parts[1]), int(parts[2]))
    elif key == "compass_offset_deg":
        general.compass_offset_deg = float(parts[1])
    elif key == "seed":
        general.seed = int(parts[1])
    elif key == "map_size_px":
        general.map_size_px = (int(parts[1]), int(parts[2]))
    else:
        raise ScenarioError(f"unknown general key {key!r}", ln)


def _parse_agent(parts, ln) -> AgentSpec:
    agent_id = parts[0]
    obj_class = parts[1]
    idx = 2
    steered = False
    if idx < len(parts) and parts[idx] == "steered":
        steered = True
        idx += 1
    if idx >= len(parts) or parts[idx] != "speed":
        raise ScenarioError("agent needs: id class [steered] speed v path x y ...", ln)
    speed = float(parts[idx + 1])
    idx += 2
    if idx >= len(parts) or parts[idx] != "path":
        raise ScenarioError("agent needs a path section", ln)
    idx += 1
    waypoints = []
    loop = False
    waves = []
    coords: list[float] = []
    while idx < len(parts):
        tok = parts[idx]
        if tok == ";":
            idx += 1
            continue
        if tok == "loop":
            loop = True
            idx += 1
            continue
        if tok == "wave":
            waves.append((float(parts[idx + 1]), float(parts[idx + 2])))
            idx += 3
            continue
        coords.append(float(tok))
        idx += 1
    if len(coords) < 2 or len(coords) % 2:
        raise ScenarioError("agent path needs x y pairs", ln)
    waypoints = [(coords[i], coords[i + 1]) for i in range(0, len(coords), 2)]
    return AgentSpec(agent_id, obj_class, steered, speed, waypoints, loop, waves)


def _parse_noise(noise: NoiseSpec, parts, ln):
    key = parts[0]
    if key == "bbox_jitter_px":
        noise.bbox_jitter_px = float(parts[1])
    elif key == "fnr_anchor":
        noise.fnr_anchors.append((float(parts[1]), float(parts[2])))
    elif key == "gesture_fpr":
        noise.gesture_fpr = float(parts[1])
    elif key == "gesture_fnr":
        noise.gesture_fnr = float(parts[1])
    elif key == "ghost_rate":
        noise.ghost_rate = float(parts[1])
    else:
        raise ScenarioError(f"unknown noise key {key!r}", ln)


def _validate(s: Scenario):
    ids = [n.node_id for n in s.nodes]
    if len(ids) != len(set(ids)):
        raise ScenarioError("duplicate node ids")
    known = set(ids)
    for a, b, kind, signal_id in s.edges:
        if a not in known or b not in known:
            raise ScenarioError(f"edge {a}-{b} references unknown node")
        if kind == "crosswalk":
            if not signal_id:
                raise ScenarioError(f"crosswalk {a}-{b} needs a signal id")
            if signal_id not in s.signals:
                raise ScenarioError(f"crosswalk {a}-{b} references unknown signal {signal_id!r}")
    steered = [a for a in s.agents if a.steered]
    if len(steered) > 1:
        raise ScenarioError("at most one steered agent is supported")
    for route in s.routes:
        if route.dest_node_id not in known:
            raise ScenarioError(f"route {route.name} destination {route.dest_node_id} unknown")
    for d, f in s.noise.fnr_anchors:
        if not 0.0 <= f <= 1.0:
            raise ScenarioError(f"fnr anchor {f} outside [0,1]")
    anchors = s.noise.fnr_anchors
    if any(anchors[i][1] > anchors[i + 1][1] for i in range(len(anchors) - 1)):
        raise ScenarioError("fnr anchors must be non-decreasing with distance")
