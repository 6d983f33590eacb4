"""The four navigation/reflex tasks as deterministic simulations over a
streamed avatar, with event logs and per-task metrics.

Coordinates: y up, tasks run along +x inside the 4 x 4 m area centred on
the origin.  The harness ticks at ``tick_hz`` and holds each avatar frame
(produced at ``avatar_fps``) until the next one.
"""

from __future__ import annotations

import bisect
import configparser
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .avatar import UP, JointId, Skeleton, body_height, facing_direction
from .decimation import DecimationParams
from .frames import SensorFrame
from .host import MergedFrame, SplatPolicy, merge
from .pipeline import SyntheticCapture
from .sensors import BodyModel, Layout, default_layout
from .walker import AREA_HALF, WalkerScript

J = JointId
GRAVITY = np.array([0.0, -9.81, 0.0])
BAR_CLEARANCE = 0.12
HAND_JOINTS = (J.HAND_LEFT, J.HAND_RIGHT, J.HAND_TIP_LEFT, J.HAND_TIP_RIGHT)


class HeightTooSmall(ValueError):
    pass


class TimeBeforeLaunch(ValueError):
    pass


class Unreachable(ValueError):
    pass


class TaskTimeout(RuntimeError):
    pass


def bar_height(user_height: float) -> float:
    """Lower edge of the task-3 bar: 12 cm under the user's total height."""
    if not user_height > BAR_CLEARANCE:
        raise HeightTooSmall(f"user height {user_height} m is not above {BAR_CLEARANCE} m")
    return user_height - BAR_CLEARANCE


# -- obstacles -------------------------------------------------------------

@dataclass(frozen=True)
class Barrel:
    id: str
    center: tuple[float, float]  # (x, z) on the floor
    radius: float = 0.3
    height: float = 0.9

    def __post_init__(self) -> None:
        if not (self.radius > 0 and self.height > 0):
            raise ValueError("barrel dimensions must be positive")

    def contains(self, points: np.ndarray) -> np.ndarray:
        dx = points[:, 0] - self.center[0]
        dz = points[:, 2] - self.center[1]
        return (dx * dx + dz * dz <= self.radius**2) & (points[:, 1] >= 0.0) & (points[:, 1] <= self.height)


@dataclass(frozen=True)
class Bar:
    """Axis-aligned box."""

    id: str
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self) -> None:
        if not all(h > l for l, h in zip(self.lo, self.hi)):
            raise ValueError("bar box must have positive extent")

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.all((points >= self.lo) & (points <= self.hi), axis=1)


Obstacle = Barrel | Bar


@dataclass(frozen=True)
class TargetSphere:
    center: tuple[float, float, float]
    radius: float = 0.15
    color: str = "green"

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("target radius must be positive")
        if self.color not in ("red", "green"):
            raise ValueError("target color is red or green")


@dataclass(frozen=True)
class CollisionEvent:
    time: float
    obstacle_id: str
    kind: str  # "hit" opens an episode, "clear" closes it


class CollisionTracker:
    """Debounced hit counting: an episode opens when any splat center enters
    an obstacle and closes after ``debounce`` seconds with none inside."""

    def __init__(self, obstacles: Sequence[Obstacle], debounce: float = 0.3):
        self.obstacles = list(obstacles)
        self.debounce = debounce
        self.hits = {o.id: 0 for o in self.obstacles}
        self._open: dict[str, bool] = {o.id: False for o in self.obstacles}
        self._last_inside: dict[str, float] = {}

    def update(self, t: float, centers: np.ndarray) -> list[CollisionEvent]:
        events = []
        for o in self.obstacles:
            inside = bool(len(centers)) and bool(o.contains(centers).any())
            if inside:
                if not self._open[o.id]:
                    self._open[o.id] = True
                    self.hits[o.id] += 1
                    events.append(CollisionEvent(t, o.id, "hit"))
                self._last_inside[o.id] = t
            elif self._open[o.id] and t - self._last_inside[o.id] >= self.debounce - 1e-9:
                self._open[o.id] = False
                events.append(CollisionEvent(t, o.id, "clear"))
        return events

    @property
    def total(self) -> int:
        return sum(self.hits.values())


def detect_collisions(frames: Iterable[tuple[float, np.ndarray]], obstacles: Sequence[Obstacle],
                      debounce: float = 0.3) -> tuple[list[CollisionEvent], dict[str, int]]:
    """Run a tracker over ``(time, splat_centers)`` samples."""
    tracker = CollisionTracker(obstacles, debounce)
    events = []
    for t, centers in frames:
        events.extend(tracker.update(t, np.asarray(centers, dtype=np.float64).reshape(-1, 3)))
    return events, tracker.hits


def hand_reaches(skeleton: Skeleton | None, target: TargetSphere) -> bool:
    if skeleton is None:
        return False
    c = np.asarray(target.center)
    for j in HAND_JOINTS:
        if skeleton.is_usable(j) and np.linalg.norm(skeleton.positions[j] - c) <= target.radius:
            return True
    return False


def reach_target(stream: Iterable[tuple[float, Skeleton | None]], target: TargetSphere) -> float | None:
    """Earliest time a hand or hand tip is inside the target sphere."""
    for t, sk in stream:
        if hand_reaches(sk, target):
            return t
    return None


# -- balls -----------------------------------------------------------------

@dataclass(frozen=True)
class Ball:
    launch_position: tuple[float, float, float]
    launch_velocity: tuple[float, float, float]
    radius: float = 0.11
    launch_time: float = 0.0
    aim: tuple[float, float, float] | None = None
    arrival_time: float | None = None


def ball_position(ball: Ball, t: float) -> np.ndarray:
    tau = t - ball.launch_time
    if tau < 0:
        raise TimeBeforeLaunch(f"t={t} precedes launch at {ball.launch_time}")
    return np.asarray(ball.launch_position) + np.asarray(ball.launch_velocity) * tau + 0.5 * GRAVITY * tau * tau


def solve_launch(origin: np.ndarray, aim: np.ndarray, speed: float) -> tuple[np.ndarray, float]:
    """Low-arc launch velocity of magnitude ``speed`` hitting ``aim``; returns (velocity, flight time)."""
    g = -GRAVITY[1]
    delta = aim - origin
    horiz = np.array([delta[0], 0.0, delta[2]])
    d = float(np.linalg.norm(horiz))
    h = float(delta[1])
    v2 = speed * speed
    disc = v2 * v2 - g * (g * d * d + 2 * h * v2)
    if disc < 0:
        raise Unreachable(f"speed {speed} m/s cannot reach {d:.3f} m away, {h:+.3f} m up")
    if d < 1e-12:
        if h > 0 and v2 < 2 * g * h:
            raise Unreachable("target straight above, out of reach")
        vy = speed if h >= 0 else -speed
        # smallest positive root of h = vy t - g t^2 / 2
        a, b, c = -0.5 * g, vy, -h
        roots = sorted(r for r in np.roots([a, b, c]).real if r > 0)
        return np.array([0.0, vy, 0.0]), float(roots[0]) if roots else 0.0
    theta = math.atan2(v2 - math.sqrt(disc), g * d)
    ux = horiz / d
    velocity = speed * (math.cos(theta) * ux + math.sin(theta) * UP)
    return velocity, d / (speed * math.cos(theta))


def aim_point(ball_index: int, skeleton: Skeleton, lateral_offset: float = 0.8) -> np.ndarray:
    if ball_index == 1:
        return skeleton.position(J.SPINE_MID).copy()
    if ball_index == 2:
        return skeleton.position(J.ELBOW_RIGHT).copy()
    if ball_index == 3:
        return skeleton.position(J.ELBOW_LEFT).copy()
    if ball_index == 4:
        right = np.cross(facing_direction(skeleton), UP)
        return skeleton.position(J.SPINE_MID) + lateral_offset * right
    raise ValueError(f"ball index {ball_index} not in 1-4")


def aim_cannon(ball_index: int, skeleton: Skeleton, speed: float, cannon_position: Sequence[float],
               launch_time: float = 0.0, lateral_offset: float = 0.8, radius: float = 0.11) -> Ball:
    """Ball thrown at the chest (1), right elbow (2), left elbow (3) or
    beside the user's right (4), all at the same ``speed``."""
    origin = np.asarray(cannon_position, dtype=np.float64)
    aim = aim_point(ball_index, skeleton, lateral_offset)
    velocity, flight = solve_launch(origin, aim, speed)
    return Ball(tuple(origin), tuple(velocity), radius, launch_time, tuple(aim), launch_time + flight)


@dataclass
class BallTracker:
    """Resolves one ball against avatar frames: caught or passed."""

    ball: Ball
    plane_point: np.ndarray
    plane_normal: np.ndarray
    catch_radius: float = 0.12
    outcome: str | None = None  # "caught" | "missed"

    def update(self, t: float, splats_centers: np.ndarray, splat_radii: np.ndarray) -> str | None:
        if self.outcome is not None or t < self.ball.launch_time:
            return None
        pos = ball_position(self.ball, t)
        if len(splats_centers):
            gap = np.linalg.norm(splats_centers - pos, axis=1) - splat_radii
            if gap.min() <= self.catch_radius:
                self.outcome = "caught"
                return self.outcome
        if (pos - self.plane_point) @ self.plane_normal < 0 or pos[1] <= 0.0:
            self.outcome = "missed"
        return self.outcome


def frontal_plane(skeleton: Skeleton) -> tuple[np.ndarray, np.ndarray]:
    return skeleton.position(J.SPINE_MID).copy(), facing_direction(skeleton)


def detect_catch(ball: Ball, frames: Iterable[tuple[float, MergedFrame]], plane: tuple[np.ndarray, np.ndarray],
                 catch_radius: float = 0.12) -> bool:
    """True when the ball comes within ``catch_radius`` of a splat before
    crossing the user's frontal plane or the floor."""
    tracker = BallTracker(ball, plane[0], plane[1], catch_radius)
    for t, frame in frames:
        if tracker.update(t, frame.splats.centers, frame.splats.radii) is not None:
            break
    return tracker.outcome == "caught"


# -- configuration ---------------------------------------------------------

def _vec(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _rows(text: str) -> list[tuple[float, ...]]:
    return [_vec(chunk) for chunk in text.split(";") if chunk.strip()]


@dataclass
class TaskConfig:
    start_target: tuple[float, float, float] = (-1.35, 1.2, 0.45)
    end_target: tuple[float, float, float] = (1.85, 1.2, 0.0)
    barrels: list[Barrel] = field(default_factory=list)
    bars: list[Bar] = field(default_factory=list)
    # task 3: overhead bar spanning z, centred at bar_x
    overhead_bar_x: float | None = None
    overhead_bar_depth: float = 0.1
    overhead_bar_thickness: float = 0.05
    overhead_bar_half_width: float = 0.8
    # task 4
    cannon: tuple[float, float, float] = (3.6, 2.2, 0.0)
    ball_speed: float = 6.0
    launch_times: tuple[float, ...] = (3.0, 5.0, 7.0, 9.0)
    lateral_offset: float = 0.8
    ball_radius: float = 0.11
    square: tuple[float, float, float] = (-0.4, 0.0, 0.3)  # x, z, half size


@dataclass
class ScenarioConfig:
    tasks: dict[int, TaskConfig]
    tick_hz: float = 120.0
    avatar_fps: float = 30.0
    timeout: float = 120.0
    debounce: float = 0.3
    catch_radius: float = 0.12
    target_radius: float = 0.15
    density: float = 1500.0
    low_stride: int = 4
    layout: Layout = field(default_factory=default_layout)


def default_tasks() -> dict[int, TaskConfig]:
    bar_box = lambda name, x: Bar(name, (x - 0.03, 0.15, -0.8), (x + 0.03, 0.20, 0.8))  # noqa: E731
    return {
        1: TaskConfig(barrels=[Barrel("barrel1", (-0.8, 0.0)), Barrel("barrel2", (0.8, 0.0))]),
        2: TaskConfig(bars=[bar_box("bar1", -0.5), bar_box("bar2", 0.5)]),
        3: TaskConfig(overhead_bar_x=0.0),
        4: TaskConfig(),
    }


def load_config(path: str | Path | None) -> ScenarioConfig:
    cfg = ScenarioConfig(default_tasks())
    if path is None:
        return cfg
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    if cp.has_section("scenario"):
        sec = cp["scenario"]
        for key in ("tick_hz", "avatar_fps", "timeout", "debounce", "catch_radius", "target_radius", "density"):
            if key in sec:
                setattr(cfg, key, sec.getfloat(key))
        if "low_stride" in sec:
            cfg.low_stride = sec.getint("low_stride")
        if "layout" in sec:
            from .sensors import load_layout
            cfg.layout = load_layout(Path(path).parent / sec["layout"])
    for tid, task in cfg.tasks.items():
        name = f"task{tid}"
        if not cp.has_section(name):
            continue
        sec = cp[name]
        if "start_target" in sec:
            task.start_target = _vec(sec["start_target"])
        if "end_target" in sec:
            task.end_target = _vec(sec["end_target"])
        if "barrels" in sec:
            task.barrels = [Barrel(f"barrel{i + 1}", (r[0], r[1]), r[2], r[3])
                            for i, r in enumerate(_rows(sec["barrels"]))]
        if "bars" in sec:
            task.bars = [Bar(f"bar{i + 1}", r[:3], r[3:6]) for i, r in enumerate(_rows(sec["bars"]))]
        for key in ("overhead_bar_x", "overhead_bar_depth", "overhead_bar_thickness", "overhead_bar_half_width",
                    "ball_speed", "lateral_offset", "ball_radius"):
            if key in sec:
                setattr(task, key, sec.getfloat(key))
        if "cannon" in sec:
            task.cannon = _vec(sec["cannon"])
        if "launch_times" in sec:
            task.launch_times = _vec(sec["launch_times"])
        if "square" in sec:
            task.square = _vec(sec["square"])
    return cfg


# -- avatar sources --------------------------------------------------------

class AvatarSource:
    """Zero-order-hold access to merged avatar frames by simulation time."""

    fps: float = 30.0

    def frame(self, k: int) -> MergedFrame:
        raise NotImplementedError

    def frame_at(self, t: float) -> MergedFrame:
        return self.frame(int(math.floor(t * self.fps + 1e-9)))


class ScriptedAvatar(AvatarSource):
    """Scripted walker captured by the simulated sensors and sent through the wire."""

    def __init__(self, script: WalkerScript, layout: Layout, targets: Callable[[str], Sequence[float]],
                 seed: int = 0, fps: float = 30.0, density: float = 1500.0, low_stride: int = 4):
        self.fps = fps
        self.capture = SyntheticCapture(layout, script, BodyModel(density=density),
                                        DecimationParams(low_stride=low_stride), seed, fps, targets)
        self._cache: tuple[int, MergedFrame] | None = None

    def frame(self, k: int) -> MergedFrame:
        if self._cache is None or self._cache[0] != k:
            self._cache = (k, self.capture.merged(k))
        return self._cache[1]


class RecordedAvatar(AvatarSource):
    """Replays per-sensor recordings through the host merge, latest-wins by timestamp."""

    def __init__(self, frames: Iterable[SensorFrame], layout: Layout, fps: float = 30.0, low_stride: int = 4):
        self.fps = fps
        self.poses = layout.poses
        self.policy = SplatPolicy(stride=low_stride)
        self._by_sensor: dict[int, list[SensorFrame]] = {}
        for f in frames:
            self._by_sensor.setdefault(f.sensor_id, []).append(f)
        for lst in self._by_sensor.values():
            lst.sort(key=lambda f: f.timestamp_us)
        self._ts = {sid: [f.timestamp_us for f in lst] for sid, lst in self._by_sensor.items()}
        self._cache: tuple[int, MergedFrame] | None = None

    def frame(self, k: int) -> MergedFrame:
        if self._cache is None or self._cache[0] != k:
            t_us = int(round(k * 1e6 / self.fps))
            latest = {}
            for sid, stamps in self._ts.items():
                i = bisect.bisect_right(stamps, t_us) - 1
                if i >= 0:
                    latest[sid] = self._by_sensor[sid][i]
            self._cache = (k, merge(latest, self.poses, self.policy, frame_index=k, deadline=k / self.fps))
        return self._cache[1]


# -- task runner -----------------------------------------------------------

@dataclass
class TaskResult:
    task_id: int
    elapsed: float
    collisions: int
    balls_caught: int | None = None
    hits: dict[str, int] = field(default_factory=dict)
    balls: list[str] = field(default_factory=list)

    def record(self) -> str:
        caught = "-" if self.balls_caught is None else str(self.balls_caught)
        hits = ",".join(f"{k}:{v}" for k, v in self.hits.items()) or "-"
        balls = ",".join(self.balls) or "-"
        return f"elapsed={self.elapsed:.4f};collisions={self.collisions};balls_caught={caught};hits={hits};balls={balls}"


LOG_HEADER = "task\ttick\ttime\tevent\tref\tdetail"


@dataclass
class TaskLog:
    lines: list[str] = field(default_factory=list)

    def add(self, task: int, tick: int, t: float, event: str, ref: str = "-", detail: str = "-") -> None:
        self.lines.append(f"{task}\t{tick}\t{t:.4f}\t{event}\t{ref}\t{detail}")

    def text(self) -> str:
        return "\n".join([LOG_HEADER, *self.lines]) + "\n"


def _outside_area(sk: Skeleton | None) -> bool:
    if sk is None or not sk.is_usable(J.SPINE_BASE):
        return False
    p = sk.positions[J.SPINE_BASE]
    return abs(p[0]) > AREA_HALF or abs(p[2]) > AREA_HALF


def overhead_bar(task: TaskConfig, user_height: float) -> Bar:
    lo_y = bar_height(user_height)
    x = task.overhead_bar_x
    w = task.overhead_bar_half_width
    return Bar("bar", (x - task.overhead_bar_depth / 2, lo_y, -w),
               (x + task.overhead_bar_depth / 2, lo_y + task.overhead_bar_thickness, w))


def run_task(task_id: int, cfg: ScenarioConfig, source: AvatarSource, log: TaskLog | None = None) -> TaskResult:
    """Simulate one task from the start-target touch to its end condition."""
    task = cfg.tasks[task_id]
    log = log if log is not None else TaskLog()
    start = TargetSphere(task.start_target, cfg.target_radius, "green")
    end = TargetSphere(task.end_target, cfg.target_radius, "red")
    dt = 1.0 / cfg.tick_hz
    n_ticks = int(math.ceil(cfg.timeout * cfg.tick_hz))

    obstacles: list[Obstacle] = [*task.barrels, *task.bars]
    tracker: CollisionTracker | None = None
    t_start: float | None = None
    outside = False
    balls: list[BallTracker] = []
    pending = list(enumerate(task.launch_times, start=1)) if task_id == 4 else []

    for k in range(n_ticks + 1):
        t = k * dt
        frame = source.frame_at(t)
        sk = frame.skeleton

        if _outside_area(sk) != outside:
            outside = not outside
            log.add(task_id, k, t, "boundary_exit" if outside else "boundary_return")

        if t_start is None:
            if hand_reaches(sk, start):
                t_start = t
                if task_id == 3:
                    # the bar is sized from the body at the moment the task starts
                    h = body_height(sk)
                    bar = overhead_bar(task, h)
                    obstacles.append(bar)
                    log.add(task_id, k, t, "bar_placed", bar.id,
                            f"user_height={h:.6f};lower_edge={bar.lo[1]:.6f}")
                tracker = CollisionTracker(obstacles, cfg.debounce)
                log.add(task_id, k, t, "start", "start_target")
            else:
                continue

        for ev in tracker.update(t, frame.splats.centers):
            log.add(task_id, k, t, ev.kind, ev.obstacle_id)

        if task_id == 4:
            while pending and t >= pending[0][1] - 1e-9 and sk is not None:
                idx, _ = pending.pop(0)
                ball = aim_cannon(idx, sk, task.ball_speed, task.cannon, t, task.lateral_offset, task.ball_radius)
                plane = frontal_plane(sk)
                balls.append(BallTracker(ball, plane[0], plane[1], cfg.catch_radius))
                log.add(task_id, k, t, "launch", f"ball{idx}",
                        "aim=" + ",".join(f"{v:.4f}" for v in ball.aim))
            for i, bt in enumerate(balls, start=1):
                if bt.outcome is None and bt.update(t, frame.splats.centers, frame.splats.radii):
                    log.add(task_id, k, t, bt.outcome, f"ball{i}")
            if not pending and balls and all(b.outcome for b in balls):
                return _finish(task_id, k, t, t_start, tracker, log, balls)
        elif hand_reaches(sk, end):
            log.add(task_id, k, t, "end", "end_target")
            return _finish(task_id, k, t, t_start, tracker, log, None)

    raise TaskTimeout(f"task {task_id} did not finish within {cfg.timeout} s")


def _finish(task_id: int, k: int, t: float, t_start: float, tracker: CollisionTracker, log: TaskLog,
            balls: list[BallTracker] | None) -> TaskResult:
    result = TaskResult(task_id, t - t_start, tracker.total, hits=dict(tracker.hits))
    if balls is not None:
        result.balls = [b.outcome for b in balls]
        result.balls_caught = sum(b.outcome == "caught" for b in balls)
    log.add(task_id, k, t, "result", f"task{task_id}", result.record())
    return result


def target_resolver(task: TaskConfig) -> Callable[[str], Sequence[float]]:
    def resolve(name: str) -> Sequence[float]:
        if name == "start":
            return task.start_target
        if name == "end":
            return task.end_target
        raise KeyError(f"unknown target {name!r}")
    return resolve


def run_scripted(task_ids: Sequence[int], scripts: dict[int, WalkerScript], cfg: ScenarioConfig,
                 seed: int = 0) -> tuple[list[TaskResult], TaskLog]:
    log = TaskLog()
    results = []
    for tid in task_ids:
        if tid not in scripts:
            raise KeyError(f"walker script has no section for task {tid}")
        source = ScriptedAvatar(scripts[tid], cfg.layout, target_resolver(cfg.tasks[tid]), seed=seed,
                                fps=cfg.avatar_fps, density=cfg.density, low_stride=cfg.low_stride)
        results.append(run_task(tid, cfg, source, log))
    return results, log
