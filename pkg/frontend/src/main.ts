// Walkthrough client: live steering over the broker WebSocket, or dump
// playback when a protocol-dump file is loaded.

import { Beeper, WebAudioSink, panForSide } from "./audio.js";
import { KeyboardSteering } from "./input.js";
import { BrokerLink } from "./net.js";
import {
  SIM_CONTROL_TOPIC,
  SIM_STATE_TOPIC,
  WireMessage,
  feedbackTopic,
  uplinkTopic,
} from "./protocol.js";
import { parseDump, replayTimed } from "./replay.js";
import { RenderState, apply, initialState, noteConnectRequested } from "./store.js";
import { cameraViewOps, executeOps, mapViewOps } from "./views.js";

const sessionId = `ui-${Math.random().toString(36).slice(2, 10)}`;
const state: RenderState = initialState();

const $ = (id: string) => document.getElementById(id)!;
const mapCanvas = $("map-view") as HTMLCanvasElement;
const camCanvas = $("camera-view") as HTMLCanvasElement;

let beeper: Beeper | null = null;
let audioSink: WebAudioSink | null = null;
let lastHapticShown = 0;
let compassTimer: ReturnType<typeof setInterval> | null = null;

function ensureAudio() {
  if (!beeper) {
    audioSink = new WebAudioSink();
    beeper = new Beeper(audioSink);
  }
  audioSink?.resume();
}

// ---------------------------------------------------------------- rendering

function render() {
  const mctx = mapCanvas.getContext("2d")!;
  executeOps(mctx, mapViewOps(state, mapCanvas.width, mapCanvas.height), mapCanvas.width, mapCanvas.height);
  const cctx = camCanvas.getContext("2d")!;
  executeOps(cctx, cameraViewOps(state, camCanvas.width, camCanvas.height), camCanvas.width, camCanvas.height);

  $("conn-state").textContent = state.connection;
  $("phase").textContent = state.phase;
  $("banner").textContent = state.bannerText ?? "";
  $("banner").className = state.phase === "suspended" ? "banner alert" : "banner";
  $("overview").textContent = state.overviewText ?? "";
  $("instruction").textContent = state.instructionText ?? "";
  const adv = state.lastAdvisory;
  $("advisory").textContent = adv ? adv.text : "";

  const veerBox = $("veer-state");
  if (state.veer) {
    veerBox.textContent = `BEEP ${state.veer.side} @ ${state.veer.rate_hz.toFixed(1)} Hz (veer ${state.veer.veer_deg.toFixed(0)} deg)`;
    veerBox.className = `veer beeping pan-${state.veer.side}`;
  } else {
    veerBox.textContent = "on course";
    veerBox.className = "veer";
  }

  // haptic pulse: flash the frame border briefly per haptic message
  if (state.lastHapticMs && state.lastHapticMs !== lastHapticShown) {
    lastHapticShown = state.lastHapticMs;
    document.body.classList.add("haptic-pulse");
    setTimeout(() => document.body.classList.remove("haptic-pulse"), 220);
  }

  const list = $("transcript");
  const entries = state.transcript.slice(-24);
  list.innerHTML = entries
    .map((e) => `<div class="t-${e.kind}"><span>${(e.t_ms / 1000).toFixed(1)}s</span> ${e.text}</div>`)
    .join("");
  list.scrollTop = list.scrollHeight;

  const pois = $("pois");
  pois.innerHTML = state.pois
    .map(
      (p) =>
        `<button data-poi="${p.id}">${p.name} (${Math.round(p.distance_m / 0.3048)} ft)</button>`,
    )
    .join(" ");

  beeper?.tick();
  requestAnimationFrame(render);
}

// ---------------------------------------------------------------- live mode

let link: BrokerLink | null = null;

function connectLive() {
  ensureAudio();
  const url = `ws://${location.host}/ws`;
  link = new BrokerLink(url, [feedbackTopic(sessionId), SIM_STATE_TOPIC]);
  link.onState = (s) => {
    state.connection = s;
    if (s === "connected") {
      link!.publish(uplinkTopic(sessionId), "connect_request", sessionId, { client: "walkthrough" });
      noteConnectRequested(state);
    }
  };
  link.onMessage = (msg: WireMessage) => {
    apply(state, msg);
    if (msg.type === "veer") beeper?.setVeer(state.veer);
    if (msg.type === "haptic" || msg.type === "arrival" || msg.type === "tracking_lost") {
      beeper?.setVeer(null);
    }
  };
  link.connect();

  const steering = new KeyboardSteering(
    (payload) => link?.publish(SIM_CONTROL_TOPIC, "steer_command", sessionId, payload),
    (waving) => link?.publish(uplinkTopic(sessionId), "wave_signal", sessionId, { waving }),
  );
  steering.attach(window);

  // on-screen compass: republish the steered agent's heading at 5 Hz
  compassTimer = setInterval(() => {
    const me = state.snapshot?.agents.find((a) => a.steered);
    if (me) {
      link?.publish(uplinkTopic(sessionId), "compass_update", sessionId, {
        heading_deg: me.heading_deg,
      });
    }
  }, 200);

  $("pois").addEventListener("click", (ev) => {
    const target = ev.target as HTMLElement;
    const poi = target.getAttribute("data-poi");
    if (poi) {
      link?.publish(uplinkTopic(sessionId), "select_destination", sessionId, {
        poi_id: Number(poi),
      });
    }
  });
}

// -------------------------------------------------------------- replay mode

function setupReplay() {
  const input = $("dump-file") as HTMLInputElement;
  input.addEventListener("change", async () => {
    const file = input.files?.[0];
    if (!file) return;
    ensureAudio();
    const messages = parseDump(await file.text());
    Object.assign(state, initialState());
    state.connection = "connected";
    replayTimed(
      state,
      messages,
      (msg) => {
        if (msg.type === "veer") beeper?.setVeer(state.veer);
        if (msg.type === "haptic" || msg.type === "arrival") beeper?.setVeer(null);
      },
      Number(($("replay-speed") as HTMLInputElement).value) || 4,
    );
  });
}

$("connect-btn").addEventListener("click", () => {
  if (!link) connectLive();
});
setupReplay();
requestAnimationFrame(render);

export { panForSide, compassTimer };
