"""Run-log records and the metrics report computed from them.

A run log is line-delimited JSON with three record kinds:

    {"kind": "meta", ...}    one per route run: scenario, seed, route,
                             destination, shortest-path polyline/length
    {"kind": "frame", ...}   per tick: ground-truth agent observations,
                             detections, classified signal states, and the
                             pipeline's current user estimate
    {"kind": "wire", ...}    every broker message, tagged with direction
                             (uplink/feedback/control/state) and frame

The report derived from a log is schema-versioned and serialized with
sorted keys, so equal seeds give byte-identical reports. Metric
definitions live in METRICS.md.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Optional

from .geometry import MetricPoint
from .wire import WireMessage

RUNLOG_SCHEMA = "streetnav.runlog.v1"
REPORT_SCHEMA = "streetnav.report.v1"

FNR_BIN_EDGES_M = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]


class RunLogWriter:
    def __init__(self, path: Optional[str | Path]):
        self.path = Path(path) if path else None
        self.records: list[dict] = []
        self._fh = open(self.path, "w") if self.path else None

    def write(self, record: dict):
        self.records.append(record)
        if self._fh:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self):
        if self._fh:
            self._fh.close()
            self._fh = None


def load_run_log(path: str | Path) -> list[dict]:
    records = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{ln}: bad run-log record: {exc}") from exc
    if not records or records[0].get("schema") != RUNLOG_SCHEMA:
        raise ValueError(f"{path}: not a {RUNLOG_SCHEMA} log")
    return records


def detection_to_record(det) -> dict:
    return {
        "frame_id": det.frame_id,
        "class": det.obj_class,
        "bbox": [det.bbox.x_min, det.bbox.y_min, det.bbox.x_max, det.bbox.y_max],
        "confidence": det.confidence,
        "gesture": det.gesture.value,
        "hint": det.source_track_hint,
    }


def record_to_detection(rec: dict):
    from .geometry import BoundingBox
    from .tracking import Detection, Gesture

    return Detection(
        frame_id=rec["frame_id"],
        obj_class=rec["class"],
        bbox=BoundingBox(*rec["bbox"]),
        confidence=rec["confidence"],
        gesture=Gesture(rec["gesture"]),
        source_track_hint=rec.get("hint"),
    )


def truth_to_record(obs) -> dict:
    return {
        "id": obs.agent_id,
        "class": obs.obj_class,
        "x_m": obs.x_m,
        "y_m": obs.y_m,
        "heading_deg": obs.heading_deg,
        "distance_m": obs.distance_m,
        "in_fov": obs.in_fov,
        "occluded": obs.occluded,
        "in_frame": obs.in_frame,
        "emitted": obs.emitted,
        "waving": obs.waving,
        "steered": obs.steered,
    }


# ---------------------------------------------------------------------------
# metric computation
# ---------------------------------------------------------------------------


def _point_to_polyline_m(p: MetricPoint, polyline: list[tuple[float, float]]) -> float:
    best = math.inf
    for (ax, ay), (bx, by) in zip(polyline, polyline[1:]):
        vx, vy = bx - ax, by - ay
        seg2 = vx * vx + vy * vy
        if seg2 <= 0:
            d = math.hypot(p.x - ax, p.y - ay)
        else:
            t = max(0.0, min(1.0, ((p.x - ax) * vx + (p.y - ay) * vy) / seg2))
            d = math.hypot(p.x - (ax + t * vx), p.y - (ay + t * vy))
        best = min(best, d)
    return best


def measure(records: Iterable[dict]) -> dict:
    """Compute the metrics report from run-log records (see METRICS.md)."""
    records = list(records)
    metas = [r for r in records if r.get("kind") == "meta"]
    if not metas:
        raise ValueError("run log has no meta records")

    routes_out = []
    total_sq = 0.0
    total_n = 0
    bins = [
        {"lo_m": lo, "hi_m": hi, "frames": 0, "misses": 0}
        for lo, hi in zip(FNR_BIN_EDGES_M, FNR_BIN_EDGES_M[1:])
    ]
    flags: list[str] = []

    for meta in metas:
        route_name = meta["route"]
        user_id = meta["user_agent"]
        frames = [
            r for r in records if r.get("kind") == "frame" and r.get("route") == route_name
        ]
        wires = [
            r for r in records if r.get("kind") == "wire" and r.get("route") == route_name
        ]
        if not frames:
            flags.append(f"route {route_name}: no frames logged")
            continue

        select_frame = None
        arrival_frame = None
        for w in wires:
            msg = w["msg"]
            if msg["type"] == "select_destination" and select_frame is None:
                select_frame = w["frame"]
            if msg["type"] == "arrival" and arrival_frame is None:
                arrival_frame = w["frame"]

        walked = 0.0
        prev = None
        veer_samples: list[float] = []
        sq_sum = 0.0
        n_est = 0
        end_pos = None
        polyline = meta.get("route_polyline") or []
        for fr in frames:
            truth = {obs["id"]: obs for obs in fr.get("truth", [])}
            user = truth.get(user_id)
            if user is None:
                flags.append(f"route {route_name}: frame {fr['frame']} missing user truth")
                continue
            pos = MetricPoint(user["x_m"], user["y_m"])
            in_window = (
                select_frame is not None
                and fr["frame"] >= select_frame
                and (arrival_frame is None or fr["frame"] <= arrival_frame)
            )
            if in_window:
                if prev is not None:
                    walked += pos.distance_to(prev)
                prev = pos
                if polyline:
                    veer_samples.append(_point_to_polyline_m(pos, [tuple(p) for p in polyline]))
                end_pos = pos
            est = fr.get("est_user")
            if est is not None:
                dx = est[0] - user["x_m"]
                dy = est[1] - user["y_m"]
                sq_sum += dx * dx + dy * dy
                n_est += 1
            for obs in fr.get("truth", []):
                if not (obs["in_fov"] and not obs["occluded"] and obs["in_frame"]):
                    continue
                d = obs["distance_m"]
                for b in bins:
                    if b["lo_m"] <= d < b["hi_m"] or (d == FNR_BIN_EDGES_M[-1] and b["hi_m"] == d):
                        b["frames"] += 1
                        if not obs["emitted"]:
                            b["misses"] += 1
                        break

        total_sq += sq_sum
        total_n += n_est
        shortest = meta.get("shortest_m")
        dest_pos = meta.get("dest_pos_m")
        end_distance = None
        if end_pos is not None and dest_pos:
            end_distance = end_pos.distance_to(MetricPoint(dest_pos[0], dest_pos[1]))
        routes_out.append(
            {
                "name": route_name,
                "destination": meta.get("dest_name"),
                "arrived": arrival_frame is not None,
                "shortest_m": shortest,
                "walked_m": walked,
                "path_ratio": (walked / shortest) if shortest and arrival_frame is not None else None,
                "end_distance_m": end_distance,
                "veer_deviation_m": (sum(veer_samples) / len(veer_samples)) if veer_samples else None,
                "duration_s": frames[-1]["t"] - frames[0]["t"],
                "feet_rmse_m": math.sqrt(sq_sum / n_est) if n_est else None,
            }
        )

    for b in bins:
        b["fnr"] = (b["misses"] / b["frames"]) if b["frames"] else None

    meta0 = metas[0]
    return {
        "schema": REPORT_SCHEMA,
        "scenario": meta0.get("scenario"),
        "seed": meta0.get("seed"),
        "calibration_residual_m": meta0.get("calibration_residual_m"),
        "routes": routes_out,
        "fnr_bins": bins,
        "feet_rmse_m": math.sqrt(total_sq / total_n) if total_n else None,
        "flags": flags,
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def report_summary_lines(report: dict) -> list[str]:
    lines = [f"scenario {report['scenario']} seed {report['seed']}"]
    res = report.get("calibration_residual_m")
    if res is not None:
        lines.append(f"calibration residual: {res:.3f} m")
    for route in report["routes"]:
        status = "arrived" if route["arrived"] else "DID NOT ARRIVE"
        ratio = f"{route['path_ratio']:.3f}" if route["path_ratio"] else "n/a"
        end = f"{route['end_distance_m']:.2f} m" if route["end_distance_m"] is not None else "n/a"
        lines.append(
            f"route {route['name']}: {status}, path ratio {ratio}, end distance {end}, "
            f"{route['duration_s']:.1f} s"
        )
    if report.get("feet_rmse_m") is not None:
        lines.append(f"feet RMSE: {report['feet_rmse_m']:.3f} m")
    populated = [b for b in report["fnr_bins"] if b["frames"]]
    if populated:
        cells = ", ".join(f"{b['lo_m']:.0f}-{b['hi_m']:.0f}m: {b['fnr']:.3f}" for b in populated)
        lines.append(f"FNR by distance: {cells}")
    for flag in report.get("flags", []):
        lines.append(f"flag: {flag}")
    return lines


def wire_to_record(msg: WireMessage) -> dict:
    return msg.to_dict()


def record_to_wire(rec: dict) -> WireMessage:
    return WireMessage.from_dict(rec)
