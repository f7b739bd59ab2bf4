// Render state and the reducer that folds wire messages into it.
//
// The store is the UI's only source of truth and messages are its only
// input, so the whole interface can be rendered from a protocol-dump log
// with nothing else attached.

import type {
  BindAckPayload,
  PoiEntry,
  RouteLegLine,
  VeerPayload,
  WireMessage,
  WorldSnapshotPayload,
} from "./protocol.js";

export type ConnectionState = "disconnected" | "connecting" | "connected" | "reconnecting";

export type SessionPhase =
  | "idle"
  | "binding"
  | "bound"
  | "selecting"
  | "navigating"
  | "arrived"
  | "suspended";

export interface TranscriptEntry {
  t_ms: number;
  kind: string;
  text: string;
}

export interface RenderState {
  connection: ConnectionState;
  phase: SessionPhase;
  cornerLabel: string | null;
  bannerText: string | null;
  pois: PoiEntry[];
  overviewText: string | null;
  routeLegs: RouteLegLine[];
  instructionText: string | null;
  veer: VeerPayload | null;
  lastHapticMs: number | null;
  lastAdvisory: { advisory: string; text: string; remaining_s: number | null } | null;
  snapshot: WorldSnapshotPayload | null;
  transcript: TranscriptEntry[];
  messagesSeen: number;
}

export function initialState(): RenderState {
  return {
    connection: "disconnected",
    phase: "idle",
    cornerLabel: null,
    bannerText: null,
    pois: [],
    overviewText: null,
    routeLegs: [],
    instructionText: null,
    veer: null,
    lastHapticMs: null,
    lastAdvisory: null,
    snapshot: null,
    transcript: [],
    messagesSeen: 0,
  };
}

const TRANSCRIPT_LIMIT = 400;

function say(state: RenderState, msg: WireMessage, kind: string, text: string) {
  state.transcript.push({ t_ms: msg.timestamp_ms, kind, text });
  if (state.transcript.length > TRANSCRIPT_LIMIT) {
    state.transcript.splice(0, state.transcript.length - TRANSCRIPT_LIMIT);
  }
}

/** Fold one message into the state (mutates and returns it). */
export function apply(state: RenderState, msg: WireMessage): RenderState {
  state.messagesSeen += 1;
  const p = msg.payload;
  switch (msg.type) {
    case "bind_ack": {
      const ack = p as unknown as BindAckPayload;
      state.phase = "bound";
      state.cornerLabel = ack.corner_label;
      state.bannerText = ack.utterance;
      say(state, msg, "bind", ack.utterance);
      break;
    }
    case "poi_list": {
      state.pois = (p.pois as PoiEntry[]) ?? [];
      if (state.phase === "bound" || state.phase === "idle") state.phase = "selecting";
      break;
    }
    case "route_overview": {
      state.overviewText = String(p.utterance ?? "");
      state.routeLegs = (p.leg_list as RouteLegLine[]) ?? [];
      state.phase = "navigating";
      state.bannerText = null;
      say(state, msg, "overview", state.overviewText);
      break;
    }
    case "instruction": {
      state.instructionText = String(p.utterance ?? "");
      state.phase = "navigating";
      say(state, msg, "instruction", state.instructionText);
      break;
    }
    case "veer": {
      state.veer = p as unknown as VeerPayload;
      break;
    }
    case "haptic": {
      state.veer = null;
      state.lastHapticMs = msg.timestamp_ms;
      break;
    }
    case "obstacle": {
      say(state, msg, "obstacle", String(p.utterance ?? ""));
      break;
    }
    case "signal_advisory": {
      const advisory = String(p.advisory ?? "");
      const text = String(p.utterance ?? "");
      state.lastAdvisory = {
        advisory,
        text,
        remaining_s: (p.remaining_s as number | null) ?? null,
      };
      say(state, msg, "crossing", text);
      break;
    }
    case "arrival": {
      state.phase = "arrived";
      state.veer = null;
      state.instructionText = null;
      state.bannerText = String(p.utterance ?? "");
      say(state, msg, "arrival", String(p.utterance ?? ""));
      break;
    }
    case "tracking_lost": {
      state.phase = "suspended";
      state.veer = null;
      state.bannerText = String(p.utterance ?? "");
      say(state, msg, "tracking", String(p.utterance ?? ""));
      break;
    }
    case "error": {
      const code = String(p.code ?? "");
      const text = `${code}: ${String(p.message ?? "")}`;
      if (code === "binding_ambiguous" || code === "binding_timeout" || code === "rebind_required") {
        state.bannerText = text;
        state.phase = "binding";
      }
      say(state, msg, "error", text);
      break;
    }
    case "world_snapshot": {
      state.snapshot = p as unknown as WorldSnapshotPayload;
      break;
    }
    default:
      // uplink/steer traffic in a dump replays silently
      break;
  }
  return state;
}

export function noteConnectRequested(state: RenderState) {
  if (state.phase === "idle") state.phase = "binding";
}
