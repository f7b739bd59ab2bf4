"""Coordinate frames, feet estimation, and camera-to-map calibration.

Frames used throughout the package:

* camera frame: pixels, origin top-left, x right, y down (video raster).
* map frame: pixels of the overhead map raster, origin top-left, y down.
* metric frame: the map frame divided by ``pixels_per_meter``; all distance
  thresholds (feet, meters) live here. 1 ft = 0.3048 m exactly.

The camera-to-map transform is a planar homography H (3x3, normalized so
H[2][2] = 1) fitted from annotated point correspondences with the
normalized direct linear transform, solved by least squares over all pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    DegenerateGeometryError,
    HorizonPointError,
    InsufficientDataError,
    InvalidBoxError,
)
from .kernels import project_points

METERS_PER_FOOT = 0.3048
HORIZON_EPS = 1e-9


class PixelPoint(NamedTuple):
    x: float
    y: float


class MapPoint(NamedTuple):
    x: float
    y: float


class MetricPoint(NamedTuple):
    x: float
    y: float

    def distance_to(self, other: "MetricPoint") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def feet_to_meters(ft: float) -> float:
    return ft * METERS_PER_FOOT


def meters_to_feet(m: float) -> float:
    return m / METERS_PER_FOOT


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidBoxError(
                f"degenerate box ({self.x_min},{self.y_min},{self.x_max},{self.y_max})"
            )
        for v in (self.x_min, self.y_min, self.x_max, self.y_max):
            if not math.isfinite(v):
                raise InvalidBoxError("non-finite box coordinate")

    def as_tuple(self):
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def estimate_feet(bbox: BoundingBox) -> PixelPoint:
    """Feet position of a detection: midpoint of the box's bottom edge."""
    return PixelPoint((bbox.x_min + bbox.x_max) / 2.0, bbox.y_max)


@dataclass(frozen=True)
class CalibrationModel:
    """Fitted camera->map homography plus the map's metric scale."""

    H: np.ndarray
    pixels_per_meter: float
    residual_rmse_m: float = 0.0

    def __post_init__(self):
        H = np.asarray(self.H, dtype=np.float64)
        if H.shape != (3, 3):
            raise DegenerateGeometryError("H must be 3x3")
        if abs(H[2, 2]) < HORIZON_EPS:
            raise DegenerateGeometryError("H[2][2] ~ 0, cannot normalize")
        H = H / H[2, 2]
        if abs(np.linalg.det(H)) < 1e-12:
            raise DegenerateGeometryError("H is singular")
        if self.pixels_per_meter <= 0:
            raise ValueError("pixels_per_meter must be > 0")
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    @property
    def H_inv(self) -> np.ndarray:
        inv = np.linalg.inv(self.H)
        return inv / inv[2, 2]


def _apply_h(H: np.ndarray, x: float, y: float) -> tuple[float, float]:
    w = H[2, 0] * x + H[2, 1] * y + H[2, 2]
    if abs(w) < HORIZON_EPS:
        raise HorizonPointError(f"point ({x},{y}) maps to infinity")
    return (
        float((H[0, 0] * x + H[0, 1] * y + H[0, 2]) / w),
        float((H[1, 0] * x + H[1, 1] * y + H[1, 2]) / w),
    )


def to_map(model: CalibrationModel, p: PixelPoint) -> MapPoint:
    """Camera pixel -> map pixel via H with perspective divide."""
    return MapPoint(*_apply_h(model.H, p.x, p.y))


def to_camera(model: CalibrationModel, p: MapPoint) -> PixelPoint:
    """Map pixel -> camera pixel via H^-1."""
    return PixelPoint(*_apply_h(model.H_inv, p.x, p.y))


def to_map_batch(model: CalibrationModel, pts: np.ndarray):
    """Vectorized to_map over an (N,2) camera-pixel array."""
    return project_points(model.H, pts)


def map_to_metric(model: CalibrationModel, p: MapPoint) -> MetricPoint:
    return MetricPoint(p.x / model.pixels_per_meter, p.y / model.pixels_per_meter)


def metric_to_map(model: CalibrationModel, p: MetricPoint) -> MapPoint:
    return MapPoint(p.x * model.pixels_per_meter, p.y * model.pixels_per_meter)


def _normalization_transform(pts: np.ndarray) -> np.ndarray:
    # Hartley normalization: centroid at origin, mean distance sqrt(2)
    centroid = pts.mean(axis=0)
    d = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    if d < 1e-12:
        raise DegenerateGeometryError("all points coincide")
    s = math.sqrt(2.0) / d
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def fit_calibration(
    pairs: Sequence[tuple[PixelPoint, MapPoint]],
    pixels_per_meter: float,
) -> CalibrationModel:
    """Least-squares projective fit (normalized DLT) over all correspondences.

    Requires >= 4 pairs spanning the ground plane. The reported residual is
    the RMSE of the reprojection error in meters (map-pixel error divided by
    pixels_per_meter).
    """
    if len(pairs) < 4:
        raise InsufficientDataError(f"need >= 4 correspondences, got {len(pairs)}")
    src = np.array([[p.x, p.y] for p, _ in pairs], dtype=np.float64)
    dst = np.array([[q.x, q.y] for _, q in pairs], dtype=np.float64)

    T_src = _normalization_transform(src)
    T_dst = _normalization_transform(dst)
    sn = (np.column_stack([src, np.ones(len(src))]) @ T_src.T)[:, :2]
    dn = (np.column_stack([dst, np.ones(len(dst))]) @ T_dst.T)[:, :2]

    n = len(pairs)
    A = np.zeros((2 * n, 9))
    A[0::2, 0] = sn[:, 0]
    A[0::2, 1] = sn[:, 1]
    A[0::2, 2] = 1.0
    A[0::2, 6] = -dn[:, 0] * sn[:, 0]
    A[0::2, 7] = -dn[:, 0] * sn[:, 1]
    A[0::2, 8] = -dn[:, 0]
    A[1::2, 3] = sn[:, 0]
    A[1::2, 4] = sn[:, 1]
    A[1::2, 5] = 1.0
    A[1::2, 6] = -dn[:, 1] * sn[:, 0]
    A[1::2, 7] = -dn[:, 1] * sn[:, 1]
    A[1::2, 8] = -dn[:, 1]

    _, s, vt = np.linalg.svd(A)
    # rank < 8 means the correspondences do not pin down a homography
    if s[6] < 1e-9 * s[0]:
        raise DegenerateGeometryError("rank-deficient correspondence system")
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(T_dst) @ Hn @ T_src
    if abs(H[2, 2]) < HORIZON_EPS:
        raise DegenerateGeometryError("normalization failed, H[2][2] ~ 0")
    H = H / H[2, 2]

    model = CalibrationModel(H=H, pixels_per_meter=pixels_per_meter)
    residual = calibration_residual_rmse_m(model, pairs)
    return CalibrationModel(
        H=H, pixels_per_meter=pixels_per_meter, residual_rmse_m=residual
    )


def calibration_residual_rmse_m(
    model: CalibrationModel, pairs: Iterable[tuple[PixelPoint, MapPoint]]
) -> float:
    """Reprojection RMSE of correspondences under the model, in meters."""
    errs = []
    for cam, mp in pairs:
        proj = to_map(model, cam)
        errs.append((proj.x - mp.x) ** 2 + (proj.y - mp.y) ** 2)
    return math.sqrt(sum(errs) / len(errs)) / model.pixels_per_meter


def load_correspondences(path: str | Path) -> list[tuple[PixelPoint, MapPoint]]:
    """Parse a correspondence file: `cam_x cam_y map_x map_y` per line.

    Blank lines and `#` comments are ignored.
    """
    pairs = []
    for ln, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise InsufficientDataError(
                f"{path}:{ln}: expected 4 fields, got {len(parts)}"
            )
        cx, cy, mx, my = (float(v) for v in parts)
        pairs.append((PixelPoint(cx, cy), MapPoint(mx, my)))
    return pairs
