"""Numeric inner-loop kernels with two interchangeable backends.

The hot loops of the pipeline (pairwise IoU for track association, batch
homography projection, signal-crop pixel counting, point-in-polygon tests)
are implemented twice: once as plain loops compiled with numba's @njit, and
once as vectorized numpy. The active backend is chosen at import time from
the ``STREETNAV_NUMBA`` environment variable:

    STREETNAV_NUMBA=auto   use numba when importable (default)
    STREETNAV_NUMBA=1      require numba, fail loudly if missing
    STREETNAV_NUMBA=0      force the pure-numpy path

Both backends compute the same values (tests compare them elementwise);
``benchmarks/bench_kernels.py`` compares their throughput.
"""

from __future__ import annotations

import os

import numpy as np

_MODE = os.environ.get("STREETNAV_NUMBA", "auto").strip().lower()

if _MODE not in ("auto", "0", "1", "true", "false"):
    raise ValueError(f"STREETNAV_NUMBA must be auto/0/1, got {_MODE!r}")

_HORIZON_EPS = 1e-9


# ---------------------------------------------------------------------------
# loop implementations (numba-compilable, also runnable as plain python)
# ---------------------------------------------------------------------------

def _iou_matrix_loops(boxes_a, boxes_b):
    n = boxes_a.shape[0]
    m = boxes_b.shape[0]
    out = np.zeros((n, m), dtype=np.float64)
    for i in range(n):
        ax0, ay0, ax1, ay1 = boxes_a[i, 0], boxes_a[i, 1], boxes_a[i, 2], boxes_a[i, 3]
        area_a = (ax1 - ax0) * (ay1 - ay0)
        for j in range(m):
            bx0, by0, bx1, by1 = boxes_b[j, 0], boxes_b[j, 1], boxes_b[j, 2], boxes_b[j, 3]
            iw = min(ax1, bx1) - max(ax0, bx0)
            if iw <= 0.0:
                continue
            ih = min(ay1, by1) - max(ay0, by0)
            if ih <= 0.0:
                continue
            inter = iw * ih
            area_b = (bx1 - bx0) * (by1 - by0)
            out[i, j] = inter / (area_a + area_b - inter)
    return out


def _project_points_loops(H, pts):
    n = pts.shape[0]
    out = np.empty((n, 2), dtype=np.float64)
    valid = np.empty(n, dtype=np.bool_)
    for i in range(n):
        x = pts[i, 0]
        y = pts[i, 1]
        w = H[2, 0] * x + H[2, 1] * y + H[2, 2]
        if abs(w) < _HORIZON_EPS:
            out[i, 0] = np.nan
            out[i, 1] = np.nan
            valid[i] = False
        else:
            out[i, 0] = (H[0, 0] * x + H[0, 1] * y + H[0, 2]) / w
            out[i, 1] = (H[1, 0] * x + H[1, 1] * y + H[1, 2]) / w
            valid[i] = True
    return out, valid


def _count_signal_pixels_loops(crop, white_min, red_min, gb_max):
    h = crop.shape[0]
    w = crop.shape[1]
    white = 0
    red = 0
    for i in range(h):
        for j in range(w):
            r = crop[i, j, 0]
            g = crop[i, j, 1]
            b = crop[i, j, 2]
            if r >= white_min and g >= white_min and b >= white_min:
                white += 1
            elif r >= red_min and g <= gb_max and b <= gb_max:
                red += 1
    return white, red


def _points_in_polygon_loops(pts, poly):
    n = pts.shape[0]
    k = poly.shape[0]
    inside = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        x = pts[i, 0]
        y = pts[i, 1]
        hit = False
        j = k - 1
        for m in range(k):
            x0, y0 = poly[j, 0], poly[j, 1]
            x1, y1 = poly[m, 0], poly[m, 1]
            if (y1 > y) != (y0 > y):
                t = (y - y1) / (y0 - y1)
                if x < x1 + t * (x0 - x1):
                    hit = not hit
            j = m
        inside[i] = hit
    return inside


# ---------------------------------------------------------------------------
# vectorized numpy backend
# ---------------------------------------------------------------------------

def _iou_matrix_numpy(boxes_a, boxes_b):
    if boxes_a.shape[0] == 0 or boxes_b.shape[0] == 0:
        return np.zeros((boxes_a.shape[0], boxes_b.shape[0]), dtype=np.float64)
    a = boxes_a[:, None, :]
    b = boxes_b[None, :, :]
    iw = np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0])
    ih = np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    union = area_a + area_b - inter
    out = np.where(inter > 0.0, inter / np.where(union > 0.0, union, 1.0), 0.0)
    return out


def _project_points_numpy(H, pts):
    homog = np.column_stack([pts, np.ones(len(pts))])
    proj = homog @ H.T
    w = proj[:, 2]
    valid = np.abs(w) >= _HORIZON_EPS
    out = np.full((len(pts), 2), np.nan)
    safe = np.where(valid, w, 1.0)
    out[:, 0] = np.where(valid, proj[:, 0] / safe, np.nan)
    out[:, 1] = np.where(valid, proj[:, 1] / safe, np.nan)
    return out, valid


def _count_signal_pixels_numpy(crop, white_min, red_min, gb_max):
    r = crop[..., 0]
    g = crop[..., 1]
    b = crop[..., 2]
    white_mask = (r >= white_min) & (g >= white_min) & (b >= white_min)
    red_mask = ~white_mask & (r >= red_min) & (g <= gb_max) & (b <= gb_max)
    return int(white_mask.sum()), int(red_mask.sum())


def _points_in_polygon_numpy(pts, poly):
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    x1 = poly[:, 0][None, :]
    y1 = poly[:, 1][None, :]
    x0 = np.roll(poly[:, 0], 1)[None, :]
    y0 = np.roll(poly[:, 1], 1)[None, :]
    straddles = (y1 > y) != (y0 > y)
    denom = np.where(y0 == y1, 1.0, y0 - y1)
    t = (y - y1) / denom
    crossings = straddles & (x < x1 + t * (x0 - x1))
    return crossings.sum(axis=1) % 2 == 1


_NUMPY_IMPLS = {
    "iou_matrix": _iou_matrix_numpy,
    "project_points": _project_points_numpy,
    "count_signal_pixels": _count_signal_pixels_numpy,
    "points_in_polygon": _points_in_polygon_numpy,
}

_LOOP_IMPLS = {
    "iou_matrix": _iou_matrix_loops,
    "project_points": _project_points_loops,
    "count_signal_pixels": _count_signal_pixels_loops,
    "points_in_polygon": _points_in_polygon_loops,
}


def _build_numba_impls():
    from numba import njit

    return {name: njit(cache=True)(fn) for name, fn in _LOOP_IMPLS.items()}


if _MODE in ("0", "false"):
    _ACTIVE = dict(_NUMPY_IMPLS)
    _BACKEND = "numpy"
else:
    try:
        _ACTIVE = _build_numba_impls()
        _BACKEND = "numba"
    except ImportError:
        if _MODE in ("1", "true"):
            raise
        _ACTIVE = dict(_NUMPY_IMPLS)
        _BACKEND = "numpy"


def active_backend() -> str:
    """Name of the backend selected at import time ('numba' or 'numpy')."""
    return _BACKEND


def backends():
    """Both backend implementation tables, for tests and benchmarks."""
    table = {"numpy": _NUMPY_IMPLS}
    if _BACKEND == "numba":
        table["numba"] = _ACTIVE
    return table


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise intersection-over-union for (N,4) x (M,4) xyxy boxes."""
    a = np.ascontiguousarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.ascontiguousarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    return _ACTIVE["iou_matrix"](a, b)


def project_points(H: np.ndarray, pts: np.ndarray):
    """Apply a 3x3 homography to (N,2) points.

    Returns (projected (N,2), valid (N,) bool). Points whose homogeneous
    denominator falls under 1e-9 come back NaN with valid=False.
    """
    Hc = np.ascontiguousarray(H, dtype=np.float64)
    p = np.ascontiguousarray(pts, dtype=np.float64).reshape(-1, 2)
    if p.shape[0] == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=bool)
    return _ACTIVE["project_points"](Hc, p)


def count_signal_pixels(crop: np.ndarray, white_min: int, red_min: int, gb_max: int):
    """(white, red) pixel counts of an (H,W,3) uint8 crop.

    White wins overlap: a pixel passing the white test is never counted red.
    """
    c = np.ascontiguousarray(crop)
    white, red = _ACTIVE["count_signal_pixels"](c, white_min, red_min, gb_max)
    return int(white), int(red)


def points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Ray-casting containment test of (N,2) points against a (K,2) polygon."""
    p = np.ascontiguousarray(pts, dtype=np.float64).reshape(-1, 2)
    q = np.ascontiguousarray(poly, dtype=np.float64).reshape(-1, 2)
    if p.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    return _ACTIVE["points_in_polygon"](p, q)


def point_in_polygon(x: float, y: float, poly: np.ndarray) -> bool:
    """Single-point convenience wrapper over points_in_polygon."""
    return bool(points_in_polygon(np.array([[x, y]]), poly)[0])
