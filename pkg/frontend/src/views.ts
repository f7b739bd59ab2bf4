// Pure view-model builders: render state in, draw operations out.
//
// Keeping these as data makes the "every displayed fact comes from a wire
// message" invariant testable: the ops are a function of the store alone,
// and a thin executor paints them onto a canvas.

import type { RenderState } from "./store.js";

export type DrawOp =
  | { op: "clear"; color: string }
  | { op: "line"; x0: number; y0: number; x1: number; y1: number; color: string; width: number; dash?: number[] }
  | { op: "circle"; x: number; y: number; r: number; color: string; fill: boolean }
  | { op: "rect"; x: number; y: number; w: number; h: number; color: string; fill: boolean }
  | { op: "label"; x: number; y: number; text: string; color: string };

const FT_TO_M = 0.3048;
const ALERT_RADIUS_M = 4 * FT_TO_M;

interface Frame {
  sx: (x: number) => number;
  sy: (y: number) => number;
  sr: (r: number) => number;
}

function fitFrame(state: RenderState, width: number, height: number): Frame {
  // fit everything drawable (route + tracks + agents) with a margin
  const xs: number[] = [];
  const ys: number[] = [];
  for (const leg of state.routeLegs) {
    xs.push(leg.x0, leg.x1);
    ys.push(leg.y0, leg.y1);
  }
  if (state.snapshot) {
    for (const a of state.snapshot.agents) {
      xs.push(a.x_m);
      ys.push(a.y_m);
    }
    for (const t of state.snapshot.tracks) {
      xs.push(t.x_m);
      ys.push(t.y_m);
    }
  }
  if (xs.length === 0) {
    xs.push(0, 10);
    ys.push(0, 10);
  }
  const minX = Math.min(...xs) - 4;
  const maxX = Math.max(...xs) + 4;
  const minY = Math.min(...ys) - 4;
  const maxY = Math.max(...ys) + 4;
  const scale = Math.min(width / (maxX - minX), height / (maxY - minY));
  return {
    sx: (x) => (x - minX) * scale,
    sy: (y) => (y - minY) * scale,
    sr: (r) => r * scale,
  };
}

const TRACK_COLORS: Record<string, string> = {
  pedestrian: "#7dd3fc",
  car: "#f87171",
  bicycle: "#fbbf24",
  bus: "#f87171",
  truck: "#f87171",
  pole: "#a3a3a3",
  trash_can: "#a3a3a3",
  bench: "#a3a3a3",
};

export function mapViewOps(state: RenderState, width: number, height: number): DrawOp[] {
  const ops: DrawOp[] = [{ op: "clear", color: "#0b1020" }];
  const f = fitFrame(state, width, height);

  for (const leg of state.routeLegs) {
    ops.push({
      op: "line",
      x0: f.sx(leg.x0),
      y0: f.sy(leg.y0),
      x1: f.sx(leg.x1),
      y1: f.sy(leg.y1),
      color: leg.kind === "crosswalk" ? "#f472b6" : "#4ade80",
      width: 3,
      dash: leg.kind === "crosswalk" ? [6, 4] : undefined,
    });
  }

  const snap = state.snapshot;
  if (snap) {
    for (const track of snap.tracks) {
      const color = track.bound ? "#facc15" : TRACK_COLORS[track.kind] ?? "#e5e7eb";
      ops.push({
        op: "circle",
        x: f.sx(track.x_m),
        y: f.sy(track.y_m),
        r: track.bound ? 6 : 4,
        color,
        fill: true,
      });
      if (track.bound) {
        // the 4 ft obstacle-alert ring around the user
        ops.push({
          op: "circle",
          x: f.sx(track.x_m),
          y: f.sy(track.y_m),
          r: f.sr(ALERT_RADIUS_M),
          color: "#facc15",
          fill: false,
        });
      }
    }
    for (const agent of snap.agents) {
      ops.push({
        op: "circle",
        x: f.sx(agent.x_m),
        y: f.sy(agent.y_m),
        r: 2,
        color: agent.steered ? "#ffffff" : "#475569",
        fill: true,
      });
    }
    for (const sig of snap.signals) {
      const text =
        sig.remaining_s == null
          ? `${sig.id}: ${sig.state}`
          : `${sig.id}: ${sig.state} ${Math.round(sig.remaining_s)}s`;
      ops.push({
        op: "label",
        x: 8,
        y: 16 + 14 * snap.signals.indexOf(sig),
        text,
        color: sig.state === "walk" ? "#4ade80" : sig.state === "wait" ? "#f87171" : "#9ca3af",
      });
    }
  }
  return ops;
}

export function cameraViewOps(state: RenderState, width: number, height: number): DrawOp[] {
  const ops: DrawOp[] = [{ op: "clear", color: "#111827" }];
  const snap = state.snapshot;
  if (!snap) return ops;
  // camera frames are 1920x1080; scale into the canvas
  const sx = width / 1920;
  const sy = height / 1080;
  for (const det of snap.detections) {
    ops.push({
      op: "rect",
      x: det.x_min * sx,
      y: det.y_min * sy,
      w: (det.x_max - det.x_min) * sx,
      h: (det.y_max - det.y_min) * sy,
      color: TRACK_COLORS[det.kind] ?? "#e5e7eb",
      fill: false,
    });
    ops.push({
      op: "label",
      x: det.x_min * sx,
      y: det.y_min * sy - 2,
      text: det.kind,
      color: "#e5e7eb",
    });
  }
  return ops;
}

export function executeOps(ctx: CanvasRenderingContext2D, ops: DrawOp[], width: number, height: number) {
  for (const op of ops) {
    switch (op.op) {
      case "clear":
        ctx.fillStyle = op.color;
        ctx.fillRect(0, 0, width, height);
        break;
      case "line":
        ctx.strokeStyle = op.color;
        ctx.lineWidth = op.width;
        ctx.setLineDash(op.dash ?? []);
        ctx.beginPath();
        ctx.moveTo(op.x0, op.y0);
        ctx.lineTo(op.x1, op.y1);
        ctx.stroke();
        ctx.setLineDash([]);
        break;
      case "circle":
        ctx.beginPath();
        ctx.arc(op.x, op.y, op.r, 0, Math.PI * 2);
        if (op.fill) {
          ctx.fillStyle = op.color;
          ctx.fill();
        } else {
          ctx.strokeStyle = op.color;
          ctx.lineWidth = 1.5;
          ctx.stroke();
        }
        break;
      case "rect":
        if (op.fill) {
          ctx.fillStyle = op.color;
          ctx.fillRect(op.x, op.y, op.w, op.h);
        } else {
          ctx.strokeStyle = op.color;
          ctx.lineWidth = 1.5;
          ctx.strokeRect(op.x, op.y, op.w, op.h);
        }
        break;
      case "label":
        ctx.fillStyle = op.color;
        ctx.font = "12px sans-serif";
        ctx.fillText(op.text, op.x, op.y);
        break;
    }
  }
}
