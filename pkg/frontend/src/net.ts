// WebSocket link to the broker: subscriptions, uplink publishing, and a
// visible reconnect state. Reconnecting reuses the session id, which the
// pipeline honors for 60 s before requiring a fresh wave.

import { WireMessage, parseMessage } from "./protocol.js";
import type { ConnectionState } from "./store.js";

export class BrokerLink {
  private ws: WebSocket | null = null;
  private url: string;
  private topics: string[];
  private seq: Map<string, number> = new Map();
  private closed = false;
  onMessage: (msg: WireMessage) => void = () => {};
  onState: (state: ConnectionState) => void = () => {};

  constructor(url: string, topics: string[]) {
    this.url = url;
    this.topics = topics;
  }

  connect() {
    this.closed = false;
    this.onState("connecting");
    this.open();
  }

  private open() {
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.onState("connected");
      for (const topic of this.topics) {
        ws.send(JSON.stringify({ op: "subscribe", topic }));
      }
    };
    ws.onmessage = (ev) => {
      if (typeof ev.data !== "string") return;
      const msg = parseMessage(ev.data);
      if (msg) this.onMessage(msg);
    };
    ws.onclose = () => {
      if (this.closed) return;
      this.onState("reconnecting");
      setTimeout(() => this.open(), 1000);
    };
    ws.onerror = () => {
      ws.close();
    };
  }

  publish(topic: string, type: string, sessionId: string, payload: Record<string, unknown>) {
    if (!this.ws || this.ws.readyState !== WebSocket.OPEN) return;
    const next = (this.seq.get(topic) ?? 0) + 1;
    this.seq.set(topic, next);
    const msg: WireMessage = {
      topic,
      type,
      session_id: sessionId,
      seq: next,
      timestamp_ms: Date.now(),
      payload,
    };
    this.ws.send(JSON.stringify(msg));
  }

  close() {
    this.closed = true;
    this.ws?.close();
    this.onState("disconnected");
  }
}
