// Protocol-dump playback: render a recorded run with nothing attached.
//
// A dump is one wire-message JSON object per line (the output of
// `streetnav protocol-dump --out`). Playback walks the messages in file
// order; "timed" mode paces them by timestamp deltas, "instant" folds the
// whole log at once.

import { parseMessage, WireMessage } from "./protocol.js";
import { apply, RenderState } from "./store.js";
import type { Beeper } from "./audio.js";

export function parseDump(text: string): WireMessage[] {
  const out: WireMessage[] = [];
  for (const line of text.split("\n")) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    const msg = parseMessage(trimmed);
    if (msg) out.push(msg);
  }
  return out;
}

/** Apply every message immediately; returns the number applied. */
export function replayInstant(state: RenderState, messages: WireMessage[], beeper?: Beeper): number {
  for (const msg of messages) {
    apply(state, msg);
    if (beeper) {
      if (msg.type === "veer") beeper.setVeer(state.veer);
      if (msg.type === "haptic" || msg.type === "arrival" || msg.type === "tracking_lost") {
        beeper.setVeer(null);
      }
    }
  }
  return messages.length;
}

export interface ReplayHandle {
  stop(): void;
}

/** Paced playback via setTimeout chains; speed 1 = real time. */
export function replayTimed(
  state: RenderState,
  messages: WireMessage[],
  onApplied: (msg: WireMessage) => void,
  speed = 1,
): ReplayHandle {
  let idx = 0;
  let timer: ReturnType<typeof setTimeout> | null = null;
  const step = () => {
    if (idx >= messages.length) return;
    const msg = messages[idx];
    apply(state, msg);
    onApplied(msg);
    idx += 1;
    if (idx < messages.length) {
      const delta = Math.max(0, messages[idx].timestamp_ms - msg.timestamp_ms);
      timer = setTimeout(step, delta / speed);
    }
  };
  step();
  return {
    stop() {
      if (timer !== null) clearTimeout(timer);
      idx = messages.length;
    },
  };
}
