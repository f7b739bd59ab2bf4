"""Detection ingest, IoU track association, and wave-gesture user binding.

Association is greedy on pairwise IoU with a 0.5 threshold: the highest
remaining (track, detection) IoU wins until none clears the threshold.
Detections are canonicalized (sorted by content) before matching, so the
result is invariant to input order; remaining ties break toward the lowest
track id, then the lowest canonical detection index. Unmatched detections
spawn tracks; tracks unseen longer than the miss timeout are retired and
their ids never reused.
"""

from __future__ import annotations

import enum
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import FrameOrderError
from .geometry import (
    BoundingBox,
    CalibrationModel,
    MapPoint,
    MetricPoint,
    estimate_feet,
    map_to_metric,
    to_map,
)
from .kernels import iou_matrix

OBJECT_CLASSES = (
    "pedestrian",
    "car",
    "bicycle",
    "bus",
    "truck",
    "pole",
    "trash_can",
    "bench",
)


class Gesture(enum.Enum):
    WAVING = "waving"
    NOT_WAVING = "not_waving"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Detection:
    frame_id: int
    obj_class: str
    bbox: BoundingBox
    confidence: float
    gesture: Gesture = Gesture.UNKNOWN
    source_track_hint: Optional[int] = None  # simulator truth; evaluation only

    def __post_init__(self):
        if self.obj_class not in OBJECT_CLASSES:
            raise ValueError(f"unknown class {self.obj_class!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0,1]")

    def sort_key(self):
        return (
            self.obj_class,
            self.bbox.x_min,
            self.bbox.y_min,
            self.bbox.x_max,
            self.bbox.y_max,
            self.confidence,
            self.gesture.value,
        )


@dataclass
class Track:
    track_id: int
    obj_class: str
    last_bbox: BoundingBox
    feet_map: MapPoint
    feet_metric: MetricPoint
    last_seen_frame: int
    first_seen_frame: int
    waving_history: deque = field(default_factory=lambda: deque(maxlen=256))

    @property
    def age_frames(self) -> int:
        return self.last_seen_frame - self.first_seen_frame + 1


@dataclass(frozen=True)
class TrackerConfig:
    iou_threshold: float = 0.5
    miss_timeout_s: float = 1.0
    frame_rate_hz: float = 10.0

    @property
    def miss_timeout_frames(self) -> int:
        return max(1, round(self.miss_timeout_s * self.frame_rate_hz))


@dataclass(frozen=True)
class BindingConfig:
    min_wave_duration_s: float = 2.0
    wave_window_s: float = 3.0
    min_wave_fraction: float = 0.6
    gesture_accuracy: float = 0.83
    gesture_fpr: float = 0.24
    gesture_fnr: float = 0.10
    timeout_s: float = 20.0
    ambiguity_grace_s: float = 0.5

    def __post_init__(self):
        if not 0 < self.min_wave_duration_s <= self.wave_window_s:
            raise ValueError("need 0 < min_wave_duration <= wave_window")
        for rate in (self.min_wave_fraction, self.gesture_accuracy, self.gesture_fpr, self.gesture_fnr):
            if not 0.0 <= rate <= 1.0:
                raise ValueError("rates must be in [0,1]")


def emulate_gesture_noise(
    true_gesture: Gesture, config: BindingConfig, rng: random.Random
) -> Gesture:
    """Flip the true gesture label per the configured confusion rates.

    waving -> not_waving with probability fnr; not_waving -> waving with
    probability fpr; unknown passes through.
    """
    if true_gesture is Gesture.WAVING:
        if config.gesture_fnr > 0 and rng.random() < config.gesture_fnr:
            return Gesture.NOT_WAVING
        return Gesture.WAVING
    if true_gesture is Gesture.NOT_WAVING:
        if config.gesture_fpr > 0 and rng.random() < config.gesture_fpr:
            return Gesture.WAVING
        return Gesture.NOT_WAVING
    return true_gesture


class TrackStore:
    """Single-writer store of live tracks for one camera."""

    def __init__(self, calibration: CalibrationModel, config: TrackerConfig = TrackerConfig()):
        self.calibration = calibration
        self.config = config
        self.tracks: dict[int, Track] = {}
        self._next_id = 1
        self._last_frame: Optional[int] = None
        history_len = int(math.ceil(config.frame_rate_hz * 10)) + 8
        self._history_len = history_len

    @property
    def live_tracks(self) -> list[Track]:
        return sorted(self.tracks.values(), key=lambda t: t.track_id)

    def ingest_frame(self, frame_id: int, detections: Sequence[Detection]) -> list[Track]:
        """Associate one frame of detections; returns the live tracks."""
        if self._last_frame is not None and frame_id < self._last_frame:
            raise FrameOrderError(f"frame {frame_id} after {self._last_frame}")
        self._last_frame = frame_id

        dets = sorted(detections, key=Detection.sort_key)
        track_ids = sorted(self.tracks)
        assigned = self._associate(track_ids, dets)

        matched_dets = set()
        for tid, di in assigned:
            self._update_track(self.tracks[tid], dets[di], frame_id)
            matched_dets.add(di)

        for di, det in enumerate(dets):
            if di not in matched_dets:
                self._spawn_track(det, frame_id)

        self._retire_stale(frame_id)
        return self.live_tracks

    # -- internals ----------------------------------------------------------

    def _associate(self, track_ids: list[int], dets: Sequence[Detection]):
        if not track_ids or not dets:
            return []
        t_boxes = np.array(
            [self.tracks[tid].last_bbox.as_tuple() for tid in track_ids], dtype=np.float64
        )
        # only same-class pairs may match
        d_boxes = np.array([d.bbox.as_tuple() for d in dets], dtype=np.float64)
        iou = iou_matrix(t_boxes, d_boxes)
        for ti, tid in enumerate(track_ids):
            for di, det in enumerate(dets):
                if self.tracks[tid].obj_class != det.obj_class:
                    iou[ti, di] = 0.0

        pairs = []
        used_t: set[int] = set()
        used_d: set[int] = set()
        order = [
            (-iou[ti, di], track_ids[ti], di, ti)
            for ti in range(len(track_ids))
            for di in range(len(dets))
            if iou[ti, di] >= self.config.iou_threshold
        ]
        order.sort()
        for neg, tid, di, ti in order:
            if tid in used_t or di in used_d:
                continue
            used_t.add(tid)
            used_d.add(di)
            pairs.append((tid, di))
        return pairs

    def _update_track(self, track: Track, det: Detection, frame_id: int):
        track.last_bbox = det.bbox
        feet_px = estimate_feet(det.bbox)
        track.feet_map = to_map(self.calibration, feet_px)
        track.feet_metric = map_to_metric(self.calibration, track.feet_map)
        track.last_seen_frame = frame_id
        if track.obj_class == "pedestrian":
            track.waving_history.append((frame_id, det.gesture))

    def _spawn_track(self, det: Detection, frame_id: int):
        feet_px = estimate_feet(det.bbox)
        feet_map = to_map(self.calibration, feet_px)
        track = Track(
            track_id=self._next_id,
            obj_class=det.obj_class,
            last_bbox=det.bbox,
            feet_map=feet_map,
            feet_metric=map_to_metric(self.calibration, feet_map),
            last_seen_frame=frame_id,
            first_seen_frame=frame_id,
            waving_history=deque(maxlen=self._history_len),
        )
        if det.obj_class == "pedestrian":
            track.waving_history.append((frame_id, det.gesture))
        self.tracks[track.track_id] = track
        self._next_id += 1

    def _retire_stale(self, frame_id: int):
        limit = self.config.miss_timeout_frames
        stale = [tid for tid, t in self.tracks.items() if frame_id - t.last_seen_frame > limit]
        for tid in stale:
            del self.tracks[tid]


class BindingStatus(enum.Enum):
    PENDING = "pending"
    BOUND = "bound"
    AMBIGUOUS = "ambiguous"
    TIMEOUT = "timeout"
    IDLE = "idle"


@dataclass(frozen=True)
class BindingResult:
    status: BindingStatus
    track_id: Optional[int] = None
    corner_label: Optional[str] = None


class BindingMonitor:
    """Watches pedestrian tracks for the sustained overhead-wave gesture.

    A track satisfies the wave criterion when, inside the trailing wave
    window, waving labels cover at least ``min_wave_fraction`` of its
    observed frames and the waving observations span at least
    ``min_wave_duration_s``. To catch two users waving at once, the first
    satisfying track is held for a short grace period; if a second track
    satisfies within it, the request resolves ambiguous and the caller
    re-prompts.
    """

    def __init__(
        self,
        store: TrackStore,
        config: BindingConfig = BindingConfig(),
        excluded_track_ids: Optional[set[int]] = None,
    ):
        self.store = store
        self.config = config
        self.excluded = excluded_track_ids if excluded_track_ids is not None else set()
        self.requested_at: Optional[float] = None
        self._first_satisfied_at: Optional[float] = None

    def request(self, t: float):
        self.requested_at = t
        self._first_satisfied_at = None

    def cancel(self):
        self.requested_at = None
        self._first_satisfied_at = None

    def _satisfies(self, track: Track, t: float) -> bool:
        rate = self.store.config.frame_rate_hz
        if not track.waving_history:
            return False
        window_start_frame = track.last_seen_frame - self.config.wave_window_s * rate
        in_window = [
            (fid, g) for fid, g in track.waving_history if fid >= window_start_frame
        ]
        if not in_window:
            return False
        waving = [fid for fid, g in in_window if g is Gesture.WAVING]
        if not waving:
            return False
        fraction = len(waving) / len(in_window)
        span_s = (waving[-1] - waving[0]) / rate
        return fraction >= self.config.min_wave_fraction and span_s >= self.config.min_wave_duration_s

    def poll(self, t: float, corner_label_for=None) -> BindingResult:
        """Evaluate the wave criterion against current tracks at time t."""
        if self.requested_at is None:
            return BindingResult(BindingStatus.IDLE)

        candidates = [
            tr
            for tr in self.store.live_tracks
            if tr.obj_class == "pedestrian"
            and tr.track_id not in self.excluded
            and self._satisfies(tr, t)
        ]
        if len(candidates) >= 2:
            self.cancel()
            return BindingResult(BindingStatus.AMBIGUOUS)
        if len(candidates) == 1:
            if self._first_satisfied_at is None:
                self._first_satisfied_at = t
            if t - self._first_satisfied_at >= self.config.ambiguity_grace_s:
                track = candidates[0]
                label = corner_label_for(track) if corner_label_for else None
                self.cancel()
                return BindingResult(BindingStatus.BOUND, track.track_id, label)
            return BindingResult(BindingStatus.PENDING)

        self._first_satisfied_at = None
        if t - self.requested_at > self.config.timeout_s:
            self.cancel()
            return BindingResult(BindingStatus.TIMEOUT)
        return BindingResult(BindingStatus.PENDING)
