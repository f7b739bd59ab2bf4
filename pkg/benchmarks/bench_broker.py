#!/usr/bin/env python3
"""End-to-end broker latency under simulated guidance load.

Four TCP clients subscribe to their own feedback topics while a publisher
pushes 10 Hz bursts (veer + haptic + snapshot per tick per client, the
shape of a live session). Reports publish-to-receive latency percentiles;
the soft target is a p99 under 50 ms on a desktop.
"""

import statistics
import threading
import time

from streetnav.broker import Broker, BrokerClient, BrokerServer

N_CLIENTS = 4
TICKS = 200
RATE_HZ = 10.0


def main():
    broker = Broker()
    server = BrokerServer(broker, port=0)
    server.start()

    clients = []
    results: dict[int, list[float]] = {}
    stop = threading.Event()

    def reader(idx: int, client: BrokerClient):
        lat = results[idx] = []
        while not stop.is_set():
            try:
                item = client.recv(timeout=0.2)
            except (ConnectionError, OSError):
                return
            if item is None:
                continue
            kind, msg = item
            if kind == "message" and msg.type == "veer":
                sent_ns = msg.payload["veer_deg"]  # carries the send time
                lat.append((time.perf_counter_ns() - int(sent_ns)) / 1e6)

    for i in range(N_CLIENTS):
        c = BrokerClient(port=server.port)
        c.subscribe(f"session/u{i}/feedback")
        clients.append(c)
        threading.Thread(target=reader, args=(i, c), daemon=True).start()
    time.sleep(0.2)

    pub = BrokerClient(port=server.port)
    tick = 1.0 / RATE_HZ
    next_deadline = time.perf_counter()
    for _ in range(TICKS):
        for i in range(N_CLIENTS):
            topic = f"session/u{i}/feedback"
            pub.publish(topic, "veer", f"u{i}", {
                "side": "left",
                "rate_hz": 2.0,
                "veer_deg": float(time.perf_counter_ns()),
            })
            pub.publish(topic, "haptic", f"u{i}", {})
        next_deadline += tick
        delay = next_deadline - time.perf_counter()
        if delay > 0:
            time.sleep(delay)
    time.sleep(0.5)
    stop.set()
    time.sleep(0.3)

    all_lat = [v for lat in results.values() for v in lat]
    print(f"clients: {N_CLIENTS}, ticks: {TICKS} at {RATE_HZ:.0f} Hz")
    print(f"messages timed: {len(all_lat)}")
    if all_lat:
        all_lat.sort()
        p50 = statistics.median(all_lat)
        p99 = all_lat[int(0.99 * (len(all_lat) - 1))]
        print(f"latency p50: {p50:.2f} ms   p99: {p99:.2f} ms   max: {all_lat[-1]:.2f} ms")
        print(f"soft target p99 < 50 ms: {'MET' if p99 < 50 else 'MISSED'}")

    for c in clients:
        c.close()
    pub.close()
    server.stop()


if __name__ == "__main__":
    main()
