import math
import random
from pathlib import Path

import numpy as np
import pytest

from streetnav.geometry import CalibrationModel, MapPoint, PixelPoint, fit_calibration

REPO_ROOT = Path(__file__).resolve().parent.parent
SCENARIO_DIR = REPO_ROOT / "scenarios"


@pytest.fixture(scope="session")
def routes_scenario():
    from streetnav.scenario import parse_scenario

    return parse_scenario(SCENARIO_DIR / "routes_abc.scn")


@pytest.fixture(scope="session")
def noisy_scenario():
    from streetnav.scenario import parse_scenario

    return parse_scenario(SCENARIO_DIR / "fig3_intersection.scn")


@pytest.fixture(scope="session")
def fitted_calibration(routes_scenario) -> CalibrationModel:
    return routes_scenario.fit_calibration()


def random_homography(rng: random.Random) -> np.ndarray:
    """A well-conditioned random projective transform (H[2,2]=1)."""
    while True:
        H = np.array(
            [
                [rng.uniform(0.5, 2.0), rng.uniform(-0.3, 0.3), rng.uniform(-50, 50)],
                [rng.uniform(-0.3, 0.3), rng.uniform(0.5, 2.0), rng.uniform(-50, 50)],
                [rng.uniform(-1e-4, 1e-4), rng.uniform(-1e-4, 1e-4), 1.0],
            ]
        )
        if abs(np.linalg.det(H)) > 1e-3:
            return H


def apply_h(H: np.ndarray, x: float, y: float):
    v = H @ np.array([x, y, 1.0])
    return v[0] / v[2], v[1] / v[2]


def correspondences_from(H: np.ndarray, n: int, rng: random.Random):
    """Noiseless (camera, map) pairs generated by a known homography."""
    pairs = []
    for _ in range(n):
        x = rng.uniform(0, 1920)
        y = rng.uniform(0, 1080)
        u, v = apply_h(H, x, y)
        pairs.append((PixelPoint(x, y), MapPoint(u, v)))
    return pairs


def grid_pairs(H: np.ndarray, nx: int = 8, ny: int = 6):
    pairs = []
    for i in range(nx):
        for j in range(ny):
            x = 60 + i * (1800 / (nx - 1))
            y = 60 + j * (960 / (ny - 1))
            u, v = apply_h(H, x, y)
            pairs.append((PixelPoint(x, y), MapPoint(u, v)))
    return pairs
