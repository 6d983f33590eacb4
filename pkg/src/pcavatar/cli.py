"""``pcavatar`` command line: simulate, serve, calibrate, bench, scenario."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import wire
from .sensors import Layout, default_layout, load_layout, save_layout

TASK_CHOICES = ("1", "2", "3", "4", "all")


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {text}")
    return v


def _existing(text: str) -> Path:
    p = Path(text)
    if not p.exists():
        raise argparse.ArgumentTypeError(f"no such file or directory: {text}")
    return p


def _address(text: str) -> tuple[str, int]:
    from .host import parse_address
    try:
        return parse_address(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pcavatar", description="Multi-sensor point-cloud avatar streaming toolkit.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("simulate", help="run synthetic sensors over a scripted subject")
    s.add_argument("--sensors", type=_positive_int,
                   help="number of sensors (default: 5, or every sensor in --layout)")
    s.add_argument("--layout", type=_existing, help="sensor layout file (default: built-in five-sensor layout)")
    s.add_argument("--record", metavar="DIR", help="write one recording per sensor into DIR")
    s.add_argument("--connect", type=_address, metavar="HOST:PORT", help="stream frames to a running host")
    s.add_argument("--seconds", type=_positive_float, default=10.0, help="simulated duration (default: 10)")
    s.add_argument("--fps", type=_positive_float, default=30.0, help="sensor frame rate (default: 30)")
    s.add_argument("--seed", type=int, default=0, help="random seed for point sampling (default: 0)")
    s.add_argument("--walker", default="calibration",
                   help="built-in walker (calibration, perfect, naive) or walker script file (default: calibration)")
    s.add_argument("--task", type=int, default=1, help="walker script section to play (default: 1)")
    s.add_argument("--background", type=int, default=1000, help="floor clutter points per frame (default: 1000)")

    s = sub.add_parser("serve", help="run the stream host")
    s.add_argument("--listen", type=_address, default=("127.0.0.1", 7600), metavar="HOST:PORT",
                   help="TCP address for sensor streams (default: 127.0.0.1:7600)")
    s.add_argument("--layout", type=_existing, help="sensor layout file (default: built-in five-sensor layout)")
    s.add_argument("--fps", type=_positive_float, default=30.0, help="merged output rate (default: 30)")
    s.add_argument("--export-dir", metavar="DIR", help="write merged frames as PLY files into DIR")
    s.add_argument("--export-every", type=_positive_int, default=30,
                   help="export every Nth merged frame (default: 30)")
    s.add_argument("--expiry", type=_positive_float, default=0.5,
                   help="seconds after which a silent sensor is stale (default: 0.5)")
    s.add_argument("--r-high", type=_positive_float, default=0.008, help="splat radius of high-quality points, m")
    s.add_argument("--stride", type=_positive_int, default=4, help="low-quality decimation stride k (default: 4)")
    s.add_argument("--normals", action="store_true", help="attach skeleton-derived splat normals")
    s.add_argument("--ticks", type=_positive_int, help="stop after this many merged frames")
    s.add_argument("--http", type=_address, metavar="HOST:PORT", help="also serve the HTTP API on this address")
    s.add_argument("--quiet", action="store_true", help="do not print per-tick metrics")

    s = sub.add_parser("calibrate", help="recover sensor poses from recorded skeletons")
    s.add_argument("--recording", type=_existing, nargs="+", required=True, metavar="PATH",
                   help="recording files or directories of recordings")
    s.add_argument("--reference", type=int, default=0, help="sensor whose frame anchors the result (default: 0)")
    s.add_argument("--layout", type=_existing,
                   help="layout supplying the reference pose and sensor ranges (default: identity reference)")
    s.add_argument("--layout-out", required=True, metavar="FILE", help="where to write the calibrated layout")
    s.add_argument("--window-us", type=_positive_int, default=10_000,
                   help="max timestamp gap for matching skeletons, microseconds (default: 10000)")

    s = sub.add_parser("bench", help="codec and pipeline benchmarks")
    bsub = s.add_subparsers(dest="bench", required=True, metavar="BENCH")
    b = bsub.add_parser("codec", help="encode/decode throughput of one frame")
    b.add_argument("--points", type=_positive_int, default=10_000, help="points per frame (default: 10000)")
    b.add_argument("--iters", type=_positive_int, default=100, help="repetitions (default: 100)")
    b.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    b = bsub.add_parser("pipeline", help="paced host loop over synthetic sensor streams")
    b.add_argument("--sensors", type=_positive_int, default=5, help="number of sensors (default: 5)")
    b.add_argument("--points", type=_positive_int, default=10_000, help="points per sensor frame (default: 10000)")
    b.add_argument("--seconds", type=_positive_float, default=10.0, help="run length (default: 10)")
    b.add_argument("--fps", type=_positive_float, default=30.0, help="target rate (default: 30)")
    b.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")

    s = sub.add_parser("scenario", help="evaluation tasks")
    ssub = s.add_subparsers(dest="scenario", required=True, metavar="ACTION")
    r = ssub.add_parser("run", help="run tasks and write the event log")
    r.add_argument("--task", choices=TASK_CHOICES, default="all", help="task number or 'all' (default: all)")
    r.add_argument("--walker", default="perfect",
                   help="built-in walker (perfect, naive), walker script file, or recording file/directory "
                        "(default: perfect)")
    r.add_argument("--config", type=_existing, help="task configuration file (default: built-in course)")
    r.add_argument("--log", metavar="FILE", help="event log path (default: stdout)")
    r.add_argument("--seed", type=int, default=0, help="random seed for sensor sampling (default: 0)")
    return p


def _layout(path: Path | None, n: int | None = None) -> Layout:
    layout = load_layout(path) if path else default_layout()
    if n is not None:
        if n > len(layout):
            raise ValueError(f"layout has {len(layout)} sensors, {n} requested")
        layout = Layout(layout.sensors[:n])
    return layout


def cmd_simulate(a) -> int:
    from .runs import simulate
    layout = default_layout(a.sensors or 5) if a.layout is None else _layout(a.layout, a.sensors)
    res = simulate(layout, a.seconds, a.seed, a.fps, a.walker, a.task, a.record, a.connect,
                   background=a.background)
    for sid, n in sorted(res.frames.items()):
        print(f"sensor {sid}: {n} frames")
    if res.paths:
        print(f"recorded {len(res.paths)} files in {a.record}")
    if a.connect:
        print(f"sent {res.bytes_sent} bytes to {a.connect[0]}:{a.connect[1]}")
    return 0


def cmd_serve(a) -> int:
    from .host import SplatPolicy
    from .service.app import HostRuntime, create_app
    runtime = HostRuntime(_layout(a.layout), a.fps, a.listen, a.export_dir, a.export_every,
                          SplatPolicy(r_high=a.r_high, stride=a.stride), a.expiry, a.normals, a.ticks,
                          None if a.quiet else lambda line: print(line, flush=True))
    if a.http:
        import uvicorn
        uvicorn.run(create_app(runtime), host=a.http[0], port=a.http[1], log_level="warning")
        return 0
    runtime.start()
    print(f"listening on {runtime.address}", flush=True)
    try:
        runtime.wait()
    except KeyboardInterrupt:
        pass
    finally:
        runtime.stop()
    return 0


def cmd_calibrate(a) -> int:
    from .runs import calibrate_recordings
    layout = load_layout(a.layout) if a.layout else None
    out, rmse = calibrate_recordings(a.recording, a.reference, layout, a.window_us)
    save_layout(out, a.layout_out, rmse)
    for sid, err in sorted(rmse.items()):
        print(f"sensor {sid}: rmse {err:.6f} m")
    print(f"wrote {a.layout_out}")
    return 0


def cmd_bench(a) -> int:
    from .bench import bench_codec, bench_pipeline
    if a.bench == "codec":
        res = bench_codec(a.points, a.iters, a.seed)
    else:
        res = bench_pipeline(a.sensors, a.points, a.seconds, a.fps, a.seed)
    print("\n".join(res.lines()))
    return 0


def cmd_scenario(a) -> int:
    from .runs import run_scenario
    from .scenario import load_config
    cfg = load_config(a.config)
    tasks = [1, 2, 3, 4] if a.task == "all" else [int(a.task)]
    results, log = run_scenario(tasks, a.walker, cfg, a.seed)
    if a.log:
        Path(a.log).write_text(log.text())
        for r in results:
            print(f"task {r.task_id}: {r.record()}")
    else:
        sys.stdout.write(log.text())
    return 0


COMMANDS = {"simulate": cmd_simulate, "serve": cmd_serve, "calibrate": cmd_calibrate,
            "bench": cmd_bench, "scenario": cmd_scenario}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and args.record is None and args.connect is None:
        parser.error("simulate needs --record and/or --connect")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError, RuntimeError, wire.WireError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"pcavatar {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
