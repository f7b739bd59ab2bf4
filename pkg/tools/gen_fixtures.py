#!/usr/bin/env python3
"""Generate the bundled camera fixtures for the intersection scenarios.

Builds a ground-truth camera->map homography from an explicit pinhole
model (camera position, height, look direction, focal length), writes the
clean and lens-distorted calibration correspondence files, and reports the
field-of-view polygon plus the bbox jitter sigma that lands the feet-RMSE
in the target band. Scenario files embed this script's outputs.

Run from the repo root:  python3 tools/gen_fixtures.py
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from streetnav.geometry import (  # noqa: E402
    CalibrationModel,
    MapPoint,
    PixelPoint,
    estimate_feet,
    fit_calibration,
    map_to_metric,
    to_map,
)

# ---------------------------------------------------------------------------
# pinhole parameters (map frame: x east, y south, meters; see README)
# ---------------------------------------------------------------------------

PPM = 12.0
RESOLUTION = (1920, 1080)
CAM_GROUND_M = (60.0, 8.0)   # camera position projected on the ground
CAM_HEIGHT_M = 6.0           # second-floor mount
LOOK_AZIMUTH_DEG = 228.5     # compass bearing of the principal axis
LOOK_DEPRESSION_DEG = 29.2
FOCAL_PX = 1200.0

FOV_AZ_DEG = (195.5, 261.5)      # azimuth range at the far edge
FOV_AZ_INNER_DEG = (204.0, 253.0)  # narrower near the camera: wide boxes
                                   # at close range must stay in frame
FOV_R_M = (4.8, 42.0)

OUT_DIR = Path(__file__).resolve().parent.parent / "scenarios"
TARGET_LENS_RESIDUAL_M = 0.60
TARGET_FEET_RMSE_M = 0.41


def build_truth_homography() -> np.ndarray:
    """Ground-truth camera->map homography (3x3, H[2,2]=1)."""
    cx, cy = CAM_GROUND_M
    # right-handed world: X east, Y north, Z up; map y runs south
    C = np.array([cx, -cy, CAM_HEIGHT_M])
    az = math.radians(LOOK_AZIMUTH_DEG)
    dep = math.radians(LOOK_DEPRESSION_DEG)
    fwd = np.array(
        [math.sin(az) * math.cos(dep), math.cos(az) * math.cos(dep), -math.sin(dep)]
    )
    up = np.array([0.0, 0.0, 1.0])
    xc = np.cross(fwd, up)
    xc /= np.linalg.norm(xc)
    yc = np.cross(fwd, xc)
    R = np.vstack([xc, yc, fwd])
    t = -R @ C
    K = np.array(
        [
            [FOCAL_PX, 0.0, RESOLUTION[0] / 2.0],
            [0.0, FOCAL_PX, RESOLUTION[1] / 2.0],
            [0.0, 0.0, 1.0],
        ]
    )
    H_w2i = K @ np.column_stack([R[:, 0], R[:, 1], t])
    # map px -> world: X = u/ppm, Y = -v/ppm
    S = np.array([[1.0 / PPM, 0.0, 0.0], [0.0, -1.0 / PPM, 0.0], [0.0, 0.0, 1.0]])
    H_map2img = H_w2i @ S
    H_img2map = np.linalg.inv(H_map2img)
    return H_img2map / H_img2map[2, 2]


def fov_polygon_px(n_arc: int = 8) -> np.ndarray:
    """Trapezoidal-sector polygon: outer arc, then inner arc reversed."""
    cx, cy = CAM_GROUND_M[0] * PPM, CAM_GROUND_M[1] * PPM
    az0, az1 = FOV_AZ_DEG
    bz0, bz1 = FOV_AZ_INNER_DEG
    r0, r1 = FOV_R_M[0] * PPM, FOV_R_M[1] * PPM
    pts = []
    for i in range(n_arc + 1):
        az = math.radians(az0 + (az1 - az0) * i / n_arc)
        pts.append((cx + r1 * math.sin(az), cy - r1 * math.cos(az)))
    for i in range(n_arc + 1):
        az = math.radians(bz1 + (bz0 - bz1) * i / n_arc)
        pts.append((cx + r0 * math.sin(az), cy - r0 * math.cos(az)))
    return np.array(pts)


def sector_grid(n_az: int, n_r: int) -> list[tuple[float, float]]:
    """Map-px grid over the FOV sector (used for correspondences)."""
    cx, cy = CAM_GROUND_M[0] * PPM, CAM_GROUND_M[1] * PPM
    out = []
    for i in range(n_az):
        az = math.radians(FOV_AZ_DEG[0] + (FOV_AZ_DEG[1] - FOV_AZ_DEG[0]) * (i + 0.5) / n_az)
        for j in range(n_r):
            r = (FOV_R_M[0] + (FOV_R_M[1] - FOV_R_M[0]) * (j + 0.5) / n_r) * PPM
            out.append((cx + r * math.sin(az), cy - r * math.cos(az)))
    return out


def sample_sector(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform-by-area samples of the FOV sector, map px."""
    cx, cy = CAM_GROUND_M[0] * PPM, CAM_GROUND_M[1] * PPM
    az = np.radians(rng.uniform(FOV_AZ_DEG[0], FOV_AZ_DEG[1], n))
    r0, r1 = FOV_R_M[0] * PPM, FOV_R_M[1] * PPM
    r = np.sqrt(rng.uniform(r0 * r0, r1 * r1, n))
    return np.column_stack([cx + r * np.sin(az), cy - r * np.cos(az)])


def cam_of(H_img2map: np.ndarray, map_px: tuple[float, float]) -> tuple[float, float]:
    H = np.linalg.inv(H_img2map)
    v = H @ np.array([map_px[0], map_px[1], 1.0])
    return (v[0] / v[2], v[1] / v[2])


def distort(cam: tuple[float, float], k: float) -> tuple[float, float]:
    """Barrel-style radial perturbation about the principal point."""
    cx, cy = RESOLUTION[0] / 2.0, RESOLUTION[1] / 2.0
    dx, dy = cam[0] - cx, cam[1] - cy
    rn = math.hypot(dx, dy) / math.hypot(cx, cy)
    s = 1.0 + k * rn * rn
    return (cx + dx * s, cy + dy * s)


def write_pairs(path: Path, pairs):
    lines = ["# cam_x cam_y map_x map_y\n"]
    for cam, mp in pairs:
        lines.append(f"{cam[0]:.6f} {cam[1]:.6f} {mp[0]:.6f} {mp[1]:.6f}\n")
    path.write_text("".join(lines))
    print(f"wrote {path} ({len(pairs)} pairs)")


def main():
    OUT_DIR.mkdir(exist_ok=True)
    H = build_truth_homography()
    print("truth H (camera->map):")
    print(np.array2string(H, precision=8))

    grid = sector_grid(10, 5)
    clean_pairs = [(cam_of(H, p), p) for p in grid]
    for cam, _ in clean_pairs:
        assert 0 <= cam[0] <= RESOLUTION[0] and 0 <= cam[1] <= RESOLUTION[1], cam

    write_pairs(OUT_DIR / "fig3_calibration.txt", clean_pairs)
    model = fit_calibration(
        [(PixelPoint(*c), MapPoint(*m)) for c, m in clean_pairs], PPM
    )
    print(f"clean refit residual: {model.residual_rmse_m:.3e} m")

    # lens-noise fixture: bisect the distortion gain until the projective
    # refit leaves the target residual
    def residual_for(k: float) -> float:
        pairs = [(PixelPoint(*distort(c, k)), MapPoint(*m)) for c, m in clean_pairs]
        return fit_calibration(pairs, PPM).residual_rmse_m

    lo, hi = 0.0, 0.2
    while residual_for(hi) < TARGET_LENS_RESIDUAL_M:
        hi *= 2
    for _ in range(60):
        mid = (lo + hi) / 2
        if residual_for(mid) < TARGET_LENS_RESIDUAL_M:
            lo = mid
        else:
            hi = mid
    k = (lo + hi) / 2
    print(f"lens gain k = {k:.6f}, residual {residual_for(k):.4f} m")
    lens_pairs = [(distort(c, k), m) for c, m in clean_pairs]
    write_pairs(OUT_DIR / "fig3_calibration_lens.txt", lens_pairs)

    # verification: every point of the FOV polygon itself must render a
    # full pedestrian box (rejection-sample the polygon, like the tests do)
    from streetnav.kernels import point_in_polygon
    from streetnav.sim.camera import CameraModel

    poly = fov_polygon_px()
    camera = CameraModel(
        model, RESOLUTION, poly, (CAM_GROUND_M[0] * PPM, CAM_GROUND_M[1] * PPM)
    )
    rng = np.random.default_rng(7)
    worst = 0.0
    missing = 0
    n_checked = 0
    lo = poly.min(axis=0)
    hi = poly.max(axis=0)
    while n_checked < 20_000:
        mx, my = rng.uniform(lo, hi)
        if not point_in_polygon(mx, my, poly):
            continue
        n_checked += 1
        pos = map_to_metric(model, MapPoint(mx, my))
        bbox = camera.synth_bbox(pos, "pedestrian")
        if bbox is None:
            missing += 1
            continue
        feet = estimate_feet(bbox)
        rec = map_to_metric(model, to_map(model, feet))
        worst = max(worst, math.hypot(rec.x - pos.x, rec.y - pos.y))
    print(f"coverage: {missing}/{n_checked} polygon samples fail to render")
    print(f"worst zero-noise loop error: {worst:.3e} m")
    assert missing == 0, "FOV polygon admits unrenderable positions"

    # jitter sigma: metric RMSE is linear in sigma, so measure at 1 px
    rng = np.random.default_rng(11)
    samples = sample_sector(rng, 3000)
    sq = []
    for mx, my in samples:
        pos = map_to_metric(model, MapPoint(mx, my))
        bbox = camera.synth_bbox(pos, "pedestrian")
        if bbox is None:
            continue
        jx = rng.normal(0.0, 1.0, 2)
        jy = rng.normal(0.0, 1.0)
        feet = estimate_feet(bbox)
        noisy = PixelPoint(feet.x + (jx[0] + jx[1]) / 2.0, feet.y + jy)
        rec = map_to_metric(model, to_map(model, noisy))
        sq.append((rec.x - pos.x) ** 2 + (rec.y - pos.y) ** 2)
    rmse_at_1px = math.sqrt(sum(sq) / len(sq))
    sigma = TARGET_FEET_RMSE_M / rmse_at_1px
    print(f"feet RMSE at sigma=1px: {rmse_at_1px:.4f} m -> sigma for {TARGET_FEET_RMSE_M} m: {sigma:.3f} px")

    poly = fov_polygon_px()
    flat = " ".join(f"{x:.1f} {y:.1f}" for x, y in poly)
    print("\n[camera] section values:")
    print(f"ground_px {CAM_GROUND_M[0] * PPM:.1f} {CAM_GROUND_M[1] * PPM:.1f}")
    print(f"fov_px {flat}")


if __name__ == "__main__":
    main()
