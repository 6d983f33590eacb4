"""Workflows shared by the command line and the HTTP service."""

from __future__ import annotations

import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

from .avatar import Skeleton
from .calibration import calibrate_from_skeletons
from .decimation import DecimationParams
from .frames import SensorFrame
from .host import SensorLink
from .pipeline import SyntheticCapture
from .recording import record, replay
from .scenario import (RecordedAvatar, ScenarioConfig, TaskLog, TaskResult, default_tasks, run_scripted,
                       run_task, target_resolver)
from .sensors import BodyModel, Layout, SensorConfig
from .walker import WalkerScript, builtin_script_path, load_scripts

BUILTIN_WALKERS = ("perfect", "naive", "calibration")
REC_SUFFIX = ".pcavrec"


def walker_scripts(source: str) -> dict[int, WalkerScript]:
    """A builtin walker name or the path of a walker script file."""
    if source in BUILTIN_WALKERS:
        return load_scripts(builtin_script_path(source))
    return load_scripts(source)


def recording_paths(source: str | Path) -> list[Path]:
    """A single recording file, or every recording in a directory."""
    p = Path(source)
    if p.is_dir():
        paths = sorted(p.glob(f"*{REC_SUFFIX}"))
        if not paths:
            raise FileNotFoundError(f"no {REC_SUFFIX} files in {p}")
        return paths
    if not p.exists():
        raise FileNotFoundError(p)
    return [p]


def read_recordings(sources: Sequence[str | Path]) -> list[SensorFrame]:
    return [f for source in sources for path in recording_paths(source) for f in replay(path)]


def is_recording(source: str) -> bool:
    p = Path(source)
    return p.is_dir() or p.suffix == REC_SUFFIX


# -- simulate --------------------------------------------------------------

@dataclass
class SimulateResult:
    frames: dict[int, int]
    bytes_sent: int = 0
    paths: list[Path] | None = None


def simulate(layout: Layout, seconds: float, seed: int, fps: float = 30.0, walker: str = "calibration",
             task: int = 1, record_dir: str | Path | None = None, connect: tuple[str, int] | None = None,
             cfg: ScenarioConfig | None = None, density: float = 2000.0, background: int = 1000,
             params: DecimationParams = DecimationParams(), realtime: bool | None = None,
             sleep: Callable[[float], None] = time.sleep) -> SimulateResult:
    """Run every sensor of ``layout`` over a scripted subject.

    Frames go to per-sensor recording files, to a live host, or both.
    Streaming is paced in real time unless ``realtime`` is False; recording
    alone runs as fast as possible.
    """
    scripts = walker_scripts(walker)
    if task not in scripts:
        raise KeyError(f"walker {walker!r} has no section for task {task}")
    cfg = cfg or ScenarioConfig(default_tasks())
    capture = SyntheticCapture(layout, scripts[task], BodyModel(density=density), params, seed, fps,
                               target_resolver(cfg.tasks[task]), background)
    n = int(round(seconds * fps))
    per_sensor: dict[int, list[SensorFrame]] = {cfg_.sensor_id: [] for cfg_ in layout}
    sent = 0
    realtime = connect is not None if realtime is None else realtime
    link = SensorLink(connect) if connect is not None else None
    try:
        t0 = time.monotonic()
        for k, frames in enumerate(capture.iter_frames(n)):
            if realtime:
                ahead = t0 + k / fps - time.monotonic()
                if ahead > 0:
                    sleep(ahead)
            for sid, frame in frames.items():
                per_sensor[sid].append(frame)
                if link is not None:
                    sent += link.send(frame)
    finally:
        if link is not None:
            link.close()

    paths = None
    if record_dir is not None:
        out = Path(record_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for sid, frames in per_sensor.items():
            path = out / f"sensor_{sid}{REC_SUFFIX}"
            record(frames, path)
            paths.append(path)
    return SimulateResult({sid: len(v) for sid, v in per_sensor.items()}, sent, paths)


# -- calibrate -------------------------------------------------------------

def calibrate_recordings(sources: Sequence[str | Path], reference: int, layout: Layout | None = None,
                         window_us: int = 10_000) -> tuple[Layout, dict[int, float]]:
    """Sensor poses from the skeletons stored in recordings.

    The reference sensor keeps its pose from ``layout`` when one is given
    (identity otherwise); field-of-view and range settings also come from
    ``layout`` when present.
    """
    observations: dict[int, list[Skeleton]] = {}
    for frame in read_recordings(sources):
        observations.setdefault(frame.sensor_id, []).extend(frame.skeletons[:1])
    ref_pose = None
    if layout is not None and reference in layout.poses:
        ref_pose = layout.poses[reference]
    poses, rmse = calibrate_from_skeletons(observations, reference, ref_pose, window_us)
    if layout is None:
        out = Layout([SensorConfig(sid, pose) for sid, pose in sorted(poses.items())])
    else:
        out = layout.with_poses(poses)
    return out, rmse


# -- scenario --------------------------------------------------------------

def run_scenario(task_ids: Sequence[int], walker: str, cfg: ScenarioConfig,
                 seed: int = 0) -> tuple[list[TaskResult], TaskLog]:
    """Scripted walkers (builtin name or script file) or recorded sensor streams."""
    if is_recording(walker):
        frames = read_recordings([walker])
        log = TaskLog()
        results = []
        for tid in task_ids:
            source = RecordedAvatar(frames, cfg.layout, cfg.avatar_fps, cfg.low_stride)
            results.append(run_task(tid, cfg, source, log))
        return results, log
    return run_scripted(task_ids, walker_scripts(walker), cfg, seed)
