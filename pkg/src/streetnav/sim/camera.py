"""Synthetic camera: bounding-box rendering with paper-calibrated noise.

Detections are synthesized by sending each agent's ground position through
the calibration inverse (map -> camera), so the box's bottom-edge midpoint
reprojects exactly onto the agent's ground position — the simulator and
the localization pipeline close the loop through the same homography. Box
extents use a local pixels-per-meter scale taken from the transform's
Jacobian at the agent's position; only the bottom edge feeds localization,
so approximate sizing is fine.

Misses are sampled from a piecewise-linear false-negative-rate curve over
ground distance from the camera (clamped at the anchor ends), plus hard
misses for agents outside the field-of-view polygon or behind an occluder
polygon. Bounding-box corners get Gaussian jitter; pedestrian gesture
labels pass through the waving/not-waving confusion emulation.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import HorizonPointError
from ..geometry import (
    BoundingBox,
    CalibrationModel,
    MapPoint,
    MetricPoint,
    PixelPoint,
    to_camera,
)
from ..kernels import point_in_polygon
from ..scenario import NoiseSpec, Scenario, SignalSpec
from ..signals import SignalState
from ..tracking import BindingConfig, Detection, Gesture, emulate_gesture_noise
from .world import SimAgent, World

# metric (width, height) priors used to size synthesized boxes, by class.
# widths include the extent real detector boxes see (arm swing, stride),
# which also keeps consecutive-frame IoU above the 0.5 association gate
# for agents moving at walking speed.
CLASS_SIZE_M = {
    "pedestrian": (0.7, 1.75),
    "car": (1.9, 1.5),
    "bicycle": (1.7, 1.2),
    "bus": (2.6, 3.0),
    "truck": (2.5, 3.2),
    "pole": (0.3, 4.0),
    "trash_can": (0.7, 1.1),
    "bench": (1.8, 0.9),
}

MIN_BOX_PX = 2.0


@dataclass
class AgentObservation:
    """Ground truth bookkeeping for one agent in one rendered frame."""

    agent_id: str
    obj_class: str
    x_m: float
    y_m: float
    heading_deg: float
    distance_m: float
    in_fov: bool
    occluded: bool
    in_frame: bool
    emitted: bool
    waving: bool
    steered: bool = False


class CameraModel:
    """Map->camera view of the scenario's street camera."""

    def __init__(
        self,
        calibration: CalibrationModel,
        resolution: tuple[int, int],
        fov_polygon_px: np.ndarray,
        ground_px: tuple[float, float],
    ):
        self.calibration = calibration
        self.resolution = resolution
        self.fov_polygon_px = np.asarray(fov_polygon_px, dtype=np.float64)
        self.ground_px = ground_px
        ppm = calibration.pixels_per_meter
        self.ground_metric = MetricPoint(ground_px[0] / ppm, ground_px[1] / ppm)

    @staticmethod
    def from_scenario(scenario: Scenario, calibration: CalibrationModel) -> "CameraModel":
        if scenario.camera is None:
            raise ValueError("scenario has no [camera] section")
        return CameraModel(
            calibration,
            scenario.general.camera_resolution,
            scenario.camera.fov_polygon_px,
            scenario.camera.ground_px,
        )

    def in_fov(self, p: MapPoint) -> bool:
        return point_in_polygon(p.x, p.y, self.fov_polygon_px)

    def distance_m(self, pos: MetricPoint) -> float:
        return pos.distance_to(self.ground_metric)

    def ground_to_camera(self, p: MapPoint) -> PixelPoint:
        return to_camera(self.calibration, p)

    def local_scale_px_per_m(self, p: MapPoint) -> float:
        """Camera pixels per metric meter around a map point (isotropic)."""
        eps = 0.5  # map px
        c0 = self.ground_to_camera(p)
        cx = self.ground_to_camera(MapPoint(p.x + eps, p.y))
        cy = self.ground_to_camera(MapPoint(p.x, p.y + eps))
        j00 = (cx.x - c0.x) / eps
        j10 = (cx.y - c0.y) / eps
        j01 = (cy.x - c0.x) / eps
        j11 = (cy.y - c0.y) / eps
        det = abs(j00 * j11 - j01 * j10)
        return math.sqrt(det) * self.calibration.pixels_per_meter

    def synth_bbox(self, pos: MetricPoint, obj_class: str) -> Optional[BoundingBox]:
        """Noise-free box for an agent at a metric ground position.

        Returns None when the feet point or box width falls outside the
        camera frame (treated as out of view). The box top is clipped to
        the frame; the bottom-edge midpoint is exact by construction.
        """
        ppm = self.calibration.pixels_per_meter
        map_pt = MapPoint(pos.x * ppm, pos.y * ppm)
        try:
            feet = self.ground_to_camera(map_pt)
            scale = self.local_scale_px_per_m(map_pt)
        except HorizonPointError:
            return None
        w_px = max(MIN_BOX_PX, CLASS_SIZE_M[obj_class][0] * scale)
        h_px = max(MIN_BOX_PX, CLASS_SIZE_M[obj_class][1] * scale)
        width, height = self.resolution
        x_min = feet.x - w_px / 2.0
        x_max = feet.x + w_px / 2.0
        y_max = feet.y
        y_min = max(0.0, y_max - h_px)
        if not (0.0 <= x_min and x_max <= width and 0.0 < y_max <= height):
            return None
        if y_max - y_min < 1.0:
            return None
        return BoundingBox(x_min, y_min, x_max, y_max)


class NoiseModel:
    """Distance FNR curve + box jitter + gesture confusion rates."""

    def __init__(self, spec: NoiseSpec):
        self.spec = spec
        anchors = sorted(spec.fnr_anchors)
        self._dists = np.array([a[0] for a in anchors], dtype=np.float64)
        self._rates = np.array([a[1] for a in anchors], dtype=np.float64)
        self.gesture_rates = BindingConfig(
            gesture_fpr=spec.gesture_fpr, gesture_fnr=spec.gesture_fnr
        )

    def fnr(self, distance_m: float) -> float:
        """Miss probability at a ground distance; clamped to the anchor ends."""
        if self._dists.size == 0:
            return 0.0
        return float(np.interp(distance_m, self._dists, self._rates))

    def jitter_box(self, bbox: BoundingBox, rng: random.Random) -> BoundingBox:
        s = self.spec.bbox_jitter_px
        if s <= 0.0:
            return bbox
        x0 = bbox.x_min + rng.gauss(0.0, s)
        y0 = bbox.y_min + rng.gauss(0.0, s)
        x1 = bbox.x_max + rng.gauss(0.0, s)
        y1 = bbox.y_max + rng.gauss(0.0, s)
        if x1 <= x0:
            x0, x1 = min(x0, x1), min(x0, x1) + 1.0
        if y1 <= y0:
            y0, y1 = min(y0, y1), min(y0, y1) + 1.0
        return BoundingBox(x0, y0, x1, y1)


def _segment_crosses_polygon(a: tuple[float, float], b: tuple[float, float], poly: np.ndarray) -> bool:
    """True if segment ab intersects the polygon boundary or b lies inside."""
    if point_in_polygon(b[0], b[1], poly):
        return True
    ax, ay = a
    bx, by = b
    n = len(poly)
    for i in range(n):
        cx, cy = poly[i]
        dx, dy = poly[(i + 1) % n]
        if _segments_intersect(ax, ay, bx, by, cx, cy, dx, dy):
            return True
    return False


def _segments_intersect(ax, ay, bx, by, cx, cy, dx, dy) -> bool:
    def orient(px, py, qx, qy, rx, ry):
        v = (qx - px) * (ry - py) - (qy - py) * (rx - px)
        if v > 1e-12:
            return 1
        if v < -1e-12:
            return -1
        return 0

    o1 = orient(ax, ay, bx, by, cx, cy)
    o2 = orient(ax, ay, bx, by, dx, dy)
    o3 = orient(cx, cy, dx, dy, ax, ay)
    o4 = orient(cx, cy, dx, dy, bx, by)
    return o1 != o2 and o3 != o4


def is_occluded(camera: CameraModel, map_pt: MapPoint, occluders: list[np.ndarray]) -> bool:
    """Agent is occluded when the camera ray to it crosses any occluder."""
    for poly in occluders:
        if _segment_crosses_polygon(camera.ground_px, (map_pt.x, map_pt.y), poly):
            return True
    return False


def render_detections(
    world: World,
    camera: CameraModel,
    noise: NoiseModel,
    rng: random.Random,
) -> tuple[list[Detection], list[AgentObservation]]:
    """One frame of detections plus per-agent ground truth records.

    Agents are visited in sorted id order and every random draw happens in
    a fixed order, so equal seeds give identical streams.
    """
    ppm = camera.calibration.pixels_per_meter
    detections: list[Detection] = []
    truth: list[AgentObservation] = []
    for agent_id in sorted(world.agents):
        agent = world.agents[agent_id]
        map_pt = MapPoint(agent.position.x * ppm, agent.position.y * ppm)
        distance = camera.distance_m(agent.position)
        in_fov = camera.in_fov(map_pt)
        occluded = is_occluded(camera, map_pt, world.scenario.occluders)
        waving = agent.is_waving(world.t)
        bbox = camera.synth_bbox(agent.position, agent.obj_class) if in_fov and not occluded else None
        emitted = False
        if bbox is not None:
            miss_p = noise.fnr(distance)
            if miss_p <= 0.0 or rng.random() >= miss_p:
                emitted = True
                det_box = noise.jitter_box(bbox, rng)
                if agent.obj_class == "pedestrian":
                    true_gesture = Gesture.WAVING if waving else Gesture.NOT_WAVING
                    gesture = emulate_gesture_noise(true_gesture, noise.gesture_rates, rng)
                else:
                    gesture = Gesture.UNKNOWN
                detections.append(
                    Detection(
                        frame_id=world.frame_id,
                        obj_class=agent.obj_class,
                        bbox=det_box,
                        confidence=max(0.05, 1.0 - miss_p),
                        gesture=gesture,
                        source_track_hint=agent.hint,
                    )
                )
        truth.append(
            AgentObservation(
                agent_id=agent_id,
                obj_class=agent.obj_class,
                x_m=agent.position.x,
                y_m=agent.position.y,
                heading_deg=agent.heading_deg,
                distance_m=distance,
                in_fov=in_fov,
                occluded=occluded,
                in_frame=bbox is not None,
                emitted=emitted,
                waving=waving,
                steered=agent.steered,
            )
        )
    if noise.spec.ghost_rate > 0.0 and rng.random() < noise.spec.ghost_rate:
        ghost = _ghost_detection(world, camera, rng)
        if ghost is not None:
            detections.append(ghost)
    return detections, truth


def _ghost_detection(world: World, camera: CameraModel, rng: random.Random) -> Optional[Detection]:
    # spurious pedestrian at a uniform position inside the FOV bounding box
    poly = camera.fov_polygon_px
    for _ in range(8):
        x = rng.uniform(poly[:, 0].min(), poly[:, 0].max())
        y = rng.uniform(poly[:, 1].min(), poly[:, 1].max())
        if not point_in_polygon(x, y, poly):
            continue
        ppm = camera.calibration.pixels_per_meter
        bbox = camera.synth_bbox(MetricPoint(x / ppm, y / ppm), "pedestrian")
        if bbox is not None:
            return Detection(
                frame_id=world.frame_id,
                obj_class="pedestrian",
                bbox=bbox,
                confidence=0.5,
                gesture=Gesture.NOT_WAVING,
            )
    return None


def synth_signal_crop(spec: SignalSpec, state: SignalState, fill: float = 0.9) -> np.ndarray:
    """Deterministic RGB crop for a simulated signal screen."""
    _, _, w, h = spec.crop_rect
    crop = np.zeros((h, w, 3), dtype=np.uint8)
    n = int(fill * w * h)
    color = (255, 255, 255) if state is SignalState.WALK else (210, 40, 40)
    flat = crop.reshape(-1, 3)
    flat[:n] = color
    return crop
