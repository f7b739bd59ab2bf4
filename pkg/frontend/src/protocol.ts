// Wire message envelope and payload shapes (see ../PROTOCOL.md).
// The UI treats every displayed fact as originating from one of these.

export interface WireMessage {
  topic: string;
  type: string;
  session_id: string;
  seq: number;
  timestamp_ms: number;
  payload: Record<string, unknown>;
}

export interface VeerPayload {
  side: "left" | "right";
  rate_hz: number;
  veer_deg: number;
}

export interface BindAckPayload {
  track_id: number;
  corner_label: string;
  utterance: string;
}

export interface PoiEntry {
  id: number;
  name: string;
  distance_m: number;
}

export interface RouteLegLine {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
  kind: string;
}

export interface SnapshotAgent {
  id: string;
  kind: string;
  x_m: number;
  y_m: number;
  heading_deg: number;
  waving: boolean;
  steered: boolean;
}

export interface SnapshotDetection {
  x_min: number;
  y_min: number;
  x_max: number;
  y_max: number;
  kind: string;
}

export interface SnapshotTrack {
  id: number;
  kind: string;
  x_m: number;
  y_m: number;
  bound: boolean;
}

export interface SnapshotSignal {
  id: string;
  state: string;
  remaining_s: number | null;
}

export interface WorldSnapshotPayload {
  t: number;
  frame_id: number;
  agents: SnapshotAgent[];
  detections: SnapshotDetection[];
  tracks: SnapshotTrack[];
  signals: SnapshotSignal[];
}

export function parseMessage(raw: string): WireMessage | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const m = obj as Record<string, unknown>;
  if ("op" in m) return null; // broker control frame
  if (
    typeof m.topic !== "string" ||
    typeof m.type !== "string" ||
    typeof m.session_id !== "string" ||
    typeof m.seq !== "number" ||
    typeof m.timestamp_ms !== "number"
  ) {
    return null;
  }
  return {
    topic: m.topic,
    type: m.type,
    session_id: m.session_id,
    seq: m.seq,
    timestamp_ms: m.timestamp_ms,
    payload: (m.payload ?? {}) as Record<string, unknown>,
  };
}

export function isVeer(msg: WireMessage): msg is WireMessage & { payload: VeerPayload & Record<string, unknown> } {
  return msg.type === "veer";
}

export const uplinkTopic = (sessionId: string) => `session/${sessionId}/uplink`;
export const feedbackTopic = (sessionId: string) => `session/${sessionId}/feedback`;
export const SIM_CONTROL_TOPIC = "sim/control";
export const SIM_STATE_TOPIC = "sim/state";
