#!/usr/bin/env python3
"""Throughput comparison of the numba and numpy kernel backends.

Runs each hot kernel at realistic shapes under both backends and prints a
per-kernel table. The numba path needs one warm-up call per kernel to
trigger (or load the cached) compilation; warm-up time is reported
separately from the steady-state timing.
"""

import time

import numpy as np

from streetnav import kernels


def _boxes(rng, n):
    x0 = rng.uniform(0, 1800, n)
    y0 = rng.uniform(0, 1000, n)
    w = rng.uniform(5, 120, n)
    h = rng.uniform(10, 200, n)
    return np.column_stack([x0, y0, x0 + w, y0 + h])


def _time(fn, *args, repeat=200):
    best = float("inf")
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best


def main():
    rng = np.random.default_rng(1)
    H = np.array([[1.2, 0.01, 40.0], [0.03, 0.9, -20.0], [1e-4, -2e-4, 1.0]])
    cases = {
        "iou_matrix (40x40 boxes)": ("iou_matrix", (_boxes(rng, 40), _boxes(rng, 40))),
        "project_points (10k pts)": ("project_points", (H, rng.uniform(0, 1000, (10_000, 2)))),
        "count_signal_pixels (64x64)": (
            "count_signal_pixels",
            (rng.integers(0, 256, (64, 64, 3)).astype(np.uint8), 200, 150, 90),
        ),
        "points_in_polygon (10k pts, 18-gon)": (
            "points_in_polygon",
            (
                rng.uniform(0, 1000, (10_000, 2)),
                np.array(
                    [
                        [500 + 400 * np.cos(a), 500 + 400 * np.sin(a)]
                        for a in np.linspace(0, 2 * np.pi, 18, endpoint=False)
                    ]
                ),
            ),
        ),
    }

    tables = kernels.backends()
    print(f"active backend: {kernels.active_backend()}")
    if "numba" not in tables:
        print("numba backend unavailable (STREETNAV_NUMBA=0 or numba missing);")
        print("timing the numpy path only.\n")

    header = f"{'kernel':38} " + " ".join(f"{name:>12}" for name in tables)
    print(header)
    print("-" * len(header))
    for label, (kname, args) in cases.items():
        row = f"{label:38} "
        for backend_name, table in tables.items():
            fn = table[kname]
            fn(*args)  # warm-up / JIT
            per_call = _time(fn, *args)
            row += f"{per_call * 1e6:>10.1f}us "
        print(row)

    if "numba" in tables:
        print("\nspeedup (numpy time / numba time):")
        for label, (kname, args) in cases.items():
            tables["numba"][kname](*args)
            t_nb = _time(tables["numba"][kname], *args)
            t_np = _time(tables["numpy"][kname], *args)
            print(f"  {label:38} {t_np / t_nb:6.2f}x")


if __name__ == "__main__":
    main()
