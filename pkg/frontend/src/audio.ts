// Stereo beep rendering for veer feedback.
//
// The pan convention follows the veer message itself: the `side` field
// names the speaker, so "left" pans fully to -1 and "right" to +1. Beeps
// repeat at the commanded rate until a haptic (back within tolerance) or
// the session leaves a walking phase.

import type { VeerPayload } from "./protocol.js";

export function panForSide(side: "left" | "right"): number {
  return side === "left" ? -1 : 1;
}

export interface ScheduledBeep {
  at_ms: number;
  pan: number;
  rate_hz: number;
}

/** Minimal surface of WebAudio the beeper needs; faked in tests. */
export interface BeepSink {
  beep(pan: number, durationMs: number): void;
  now(): number;
}

export class WebAudioSink implements BeepSink {
  private ctx: AudioContext;
  private panner: StereoPannerNode;

  constructor() {
    this.ctx = new AudioContext();
    this.panner = this.ctx.createStereoPanner();
    this.panner.connect(this.ctx.destination);
  }

  resume() {
    void this.ctx.resume();
  }

  now(): number {
    return this.ctx.currentTime * 1000;
  }

  beep(pan: number, durationMs: number) {
    const osc = this.ctx.createOscillator();
    const gain = this.ctx.createGain();
    this.panner.pan.value = pan;
    osc.frequency.value = 880;
    gain.gain.value = 0.22;
    osc.connect(gain);
    gain.connect(this.panner);
    const t0 = this.ctx.currentTime;
    osc.start(t0);
    gain.gain.setTargetAtTime(0, t0 + durationMs / 1000 - 0.02, 0.01);
    osc.stop(t0 + durationMs / 1000);
  }
}

export class Beeper {
  private sink: BeepSink;
  private active: VeerPayload | null = null;
  private nextBeepAt = 0;
  readonly scheduled: ScheduledBeep[] = [];

  constructor(sink: BeepSink) {
    this.sink = sink;
  }

  setVeer(veer: VeerPayload | null) {
    if (veer === null) {
      this.active = null;
      return;
    }
    if (this.active === null) {
      this.nextBeepAt = this.sink.now();
    }
    this.active = veer;
  }

  /** Call frequently (e.g. per animation frame); emits due beeps. */
  tick() {
    if (this.active === null) return;
    const now = this.sink.now();
    const period = 1000 / Math.max(0.1, this.active.rate_hz);
    while (now >= this.nextBeepAt) {
      const pan = panForSide(this.active.side);
      this.sink.beep(pan, Math.min(120, period * 0.5));
      this.scheduled.push({ at_ms: this.nextBeepAt, pan, rate_hz: this.active.rate_hz });
      this.nextBeepAt += period;
    }
  }
}
