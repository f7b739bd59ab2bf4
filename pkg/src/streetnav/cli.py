"""Operator entry points: serve, replay, eval, protocol-dump.

Every failure path exits nonzero after printing a single line starting
with ``error:`` to stderr. Exit codes: 2 usage, 3 bad input (scenario,
log, fixture), 4 runtime failure. ``STREETNAV_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal as os_signal
import sys
import threading
import time
from pathlib import Path

from .errors import ScenarioError, StreetNavError

logger = logging.getLogger(__name__)

EXIT_BAD_INPUT = 3
EXIT_RUNTIME = 4


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_scenario(path: str):
    from .scenario import parse_scenario

    return parse_scenario(path)


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------


def cmd_serve(args) -> int:
    scenario = _load_scenario(args.scenario)
    if args.headless_agent == "compliant":
        return _serve_headless(args, scenario)
    return _serve_live(args, scenario)


def _serve_headless(args, scenario) -> int:
    from .metrics import report_summary_lines, report_to_json
    from .sim.runner import HeadlessRunner

    runner = HeadlessRunner(
        scenario,
        seed=args.seed,
        log_path=args.log_out,
        detlog_path=args.detlog_out,
        max_sim_seconds=args.max_sim_seconds,
    )
    report = runner.run()
    text = report_to_json(report)
    if args.report_out:
        Path(args.report_out).write_text(text)
    sys.stdout.write(text)
    for line in report_summary_lines(report):
        print(f"# {line}", file=sys.stderr)
    failed = [r for r in report["routes"] if not r["arrived"]]
    if failed:
        return _fail(f"{len(failed)} route(s) did not arrive", EXIT_RUNTIME)
    return 0


def _serve_live(args, scenario) -> int:
    from .broker import Broker, BrokerServer
    from .pipeline import NavigationPipeline, SimFrame
    from .sim.camera import CameraModel, NoiseModel, render_detections, synth_signal_crop
    from .sim.runner import _steer_from_msg
    from .sim.world import World
    from .wire import SIM_CONTROL_TOPIC

    broker = Broker()
    try:
        server = BrokerServer(broker, port=args.port, ui_dir=args.ui_dir)
        server.start()
    except OSError as exc:
        return _fail(f"cannot listen on port {args.port}: {exc}", EXIT_RUNTIME)

    world = World(scenario, seed=args.seed)
    calibration = scenario.fit_calibration()
    camera = CameraModel.from_scenario(scenario, calibration)
    noise = NoiseModel(scenario.noise)
    clock_ms = lambda: int(round(world.t * 1000))
    pipeline = NavigationPipeline(scenario, broker, clock_ms, calibration=calibration)
    control_sub = broker.attach("serve-control", maxlen=1024)
    broker.subscribe(control_sub, SIM_CONTROL_TOPIC)

    stop = threading.Event()

    def _sim_loop():
        dt = scenario.general.dt
        next_deadline = time.monotonic()
        while not stop.is_set():
            for msg in control_sub.drain():
                world.apply_steer(_steer_from_msg(msg))
            detections, truth = render_detections(world, camera, noise, world.rng)
            crops = {
                sid: synth_signal_crop(spec, world.signal_state(sid))
                for sid, spec in scenario.signals.items()
            }
            pipeline.process_frame(
                SimFrame(world.frame_id, world.t, detections, signal_crops=crops, truth=truth)
            )
            world.step()
            next_deadline += dt
            delay = next_deadline - time.monotonic()
            if delay > 0:
                stop.wait(delay)
            else:
                next_deadline = time.monotonic()

    sim_thread = threading.Thread(target=_sim_loop, name="sim-loop", daemon=True)
    sim_thread.start()
    print(
        f"serving scenario {scenario.general.name!r} on port {server.port} "
        f"(ui {'from ' + args.ui_dir if args.ui_dir else 'disabled'}); ctrl-c to stop"
    )

    def _on_signal(signum, frame):
        stop.set()

    os_signal.signal(os_signal.SIGINT, _on_signal)
    os_signal.signal(os_signal.SIGTERM, _on_signal)
    try:
        while not stop.is_set():
            time.sleep(0.2)
    finally:
        # shutdown order: simulator, then pipeline consumers, then broker
        stop.set()
        sim_thread.join(timeout=2.0)
        server.stop()
    return 0


# ---------------------------------------------------------------------------
# replay / eval / protocol-dump
# ---------------------------------------------------------------------------


def _log_kind(path: Path) -> str:
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            return "runlog" if line.startswith("{") else "detlog"
    return "empty"


def cmd_replay(args) -> int:
    scenario = _load_scenario(args.scenario)
    log_path = Path(args.log)
    if not log_path.is_file():
        return _fail(f"log file not found: {log_path}", EXIT_BAD_INPUT)
    kind = _log_kind(log_path)
    if kind == "empty":
        return _fail(f"log file {log_path} is empty", EXIT_BAD_INPUT)

    if kind == "runlog":
        from .metrics import load_run_log
        from .sim.runner import replay_run_log

        records = load_run_log(log_path)
        result = replay_run_log(records, scenario)
        print(json.dumps(result, sort_keys=True, indent=2))
        if not result["identical"]:
            return _fail("replayed feedback differs from the logged run", EXIT_RUNTIME)
        print(
            f"# replay identical: {result['messages']} feedback messages across "
            f"{len(result['routes'])} route(s)",
            file=sys.stderr,
        )
        return 0

    from .sim.runner import replay_detection_log

    summary = replay_detection_log(log_path, scenario)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def cmd_eval(args) -> int:
    from .metrics import load_run_log, measure, report_summary_lines, report_to_json

    try:
        records = load_run_log(args.run)
    except (OSError, ValueError) as exc:
        return _fail(str(exc), EXIT_BAD_INPUT)
    report = measure(records)
    text = report_to_json(report)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    for line in report_summary_lines(report):
        print(f"# {line}", file=sys.stderr)
    return 0


def cmd_protocol_dump(args) -> int:
    from .broker import BrokerClient

    try:
        client = BrokerClient(host=args.host, port=args.port)
    except OSError as exc:
        return _fail(f"cannot connect to broker at {args.host}:{args.port}: {exc}", EXIT_RUNTIME)
    topics = args.topics.split(",") if args.topics else [
        "session/+/uplink",
        "session/+/feedback",
        "sim/state",
        "sim/control",
    ]
    for topic in topics:
        client.subscribe(topic.strip())
    out_fh = open(args.out, "w") if args.out else None
    count = 0
    deadline = time.monotonic() + args.duration if args.duration else None
    try:
        while True:
            if deadline and time.monotonic() >= deadline:
                break
            if args.max_messages and count >= args.max_messages:
                break
            try:
                item = client.recv(timeout=0.5)
            except ConnectionError:
                break
            if item is None:
                client.send_heartbeat()
                continue
            kind, obj = item
            if kind != "message":
                continue
            line = json.dumps(obj.to_dict(), sort_keys=True)
            print(line)
            if out_fh:
                out_fh.write(line + "\n")
            count += 1
    except KeyboardInterrupt:
        pass
    finally:
        if out_fh:
            out_fh.close()
        client.close()
    print(f"# dumped {count} messages", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streetnav",
        description="Street-camera navigation pipeline and intersection simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run broker + pipeline + simulator")
    p_serve.add_argument("--scenario", required=True)
    p_serve.add_argument("--port", type=int, default=18930)
    p_serve.add_argument("--seed", type=int, default=None)
    p_serve.add_argument("--headless-agent", choices=["compliant", "none"], default="none")
    p_serve.add_argument("--ui-dir", default=None, help="serve static UI files from this directory")
    p_serve.add_argument("--log-out", default=None, help="write the run log (JSONL)")
    p_serve.add_argument("--detlog-out", default=None, help="write a detections log (text)")
    p_serve.add_argument("--report-out", default=None, help="write the metrics report (JSON)")
    p_serve.add_argument("--max-sim-seconds", type=float, default=900.0)
    p_serve.set_defaults(func=cmd_serve)

    p_replay = sub.add_parser("replay", help="re-run the pipeline over a recorded log")
    p_replay.add_argument("--log", required=True, help="run log (JSONL) or detections log (text)")
    p_replay.add_argument("--scenario", required=True)
    p_replay.set_defaults(func=cmd_replay)

    p_eval = sub.add_parser("eval", help="recompute the metrics report from a run log")
    p_eval.add_argument("--run", required=True)
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_dump = sub.add_parser("protocol-dump", help="subscribe to a live broker and print messages")
    p_dump.add_argument("--host", default="127.0.0.1")
    p_dump.add_argument("--port", type=int, default=18930)
    p_dump.add_argument("--topics", default=None, help="comma-separated topic patterns")
    p_dump.add_argument("--out", default=None, help="also write JSONL to this file")
    p_dump.add_argument("--max-messages", type=int, default=None)
    p_dump.add_argument("--duration", type=float, default=None, help="stop after this many seconds")
    p_dump.set_defaults(func=cmd_protocol_dump)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("STREETNAV_LOG", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        return _fail(f"scenario: {exc}", EXIT_BAD_INPUT)
    except FileNotFoundError as exc:
        return _fail(str(exc), EXIT_BAD_INPUT)
    except StreetNavError as exc:
        return _fail(str(exc), EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
