"""Procedural walking subject and the scripted-walker file format.

A script file is INI-style.  ``[walker]`` holds defaults (height, speed,
start, facing); each ``[taskN]`` section holds ``steps`` (one per line)::

    walk X Z [SPEED]       walk to (X, Z) facing the direction of travel
    strafe X Z [SPEED]     move to (X, Z) keeping the current facing
    wait SECONDS           stand still
    reach TARGET SECONDS   stand and extend the right hand toward a named
                           target (``start``/``end``) or ``X Y Z``

plus optional x-interval overlays of the spine base, ``;``-separated::

    lift = LO HI METERS; ...      raise the whole body (a jump)
    crouch = LO HI METERS; ...    lower everything above the knees
"""

from __future__ import annotations

import configparser
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .avatar import N_JOINTS, UP, JointId, Skeleton, matrix_to_quat, look_rotation

J = JointId


class EmptyPath(ValueError):
    pass


class ScriptError(ValueError):
    pass


AREA_HALF = 2.0
HEAD_OFFSET = 0.10

# Reference standing pose as (forward, up, right) offsets from the ground
# point under the spine base, for a head-to-foot distance of ~1.58 m.
_TEMPLATE = {
    J.SPINE_BASE: (0.0, 0.95, 0.0),
    J.SPINE_MID: (0.0, 1.20, 0.0),
    J.NECK: (0.0, 1.50, 0.0),
    J.HEAD: (0.0, 1.62, 0.0),
    J.SHOULDER_LEFT: (0.0, 1.42, -0.19),
    J.ELBOW_LEFT: (0.0, 1.14, -0.22),
    J.WRIST_LEFT: (0.02, 0.90, -0.23),
    J.HAND_LEFT: (0.03, 0.83, -0.23),
    J.SHOULDER_RIGHT: (0.0, 1.42, 0.19),
    J.ELBOW_RIGHT: (0.0, 1.14, 0.22),
    J.WRIST_RIGHT: (0.02, 0.90, 0.23),
    J.HAND_RIGHT: (0.03, 0.83, 0.23),
    J.HIP_LEFT: (0.0, 0.92, -0.10),
    J.KNEE_LEFT: (0.02, 0.50, -0.10),
    J.ANKLE_LEFT: (0.0, 0.10, -0.10),
    J.FOOT_LEFT: (0.10, 0.05, -0.10),
    J.HIP_RIGHT: (0.0, 0.92, 0.10),
    J.KNEE_RIGHT: (0.02, 0.50, 0.10),
    J.ANKLE_RIGHT: (0.0, 0.10, 0.10),
    J.FOOT_RIGHT: (0.10, 0.05, 0.10),
    J.SPINE_SHOULDER: (0.0, 1.42, 0.0),
    J.HAND_TIP_LEFT: (0.04, 0.75, -0.23),
    J.THUMB_LEFT: (0.07, 0.85, -0.20),
    J.HAND_TIP_RIGHT: (0.04, 0.75, 0.23),
    J.THUMB_RIGHT: (0.07, 0.85, 0.20),
}
TEMPLATE = np.array([_TEMPLATE[j] for j in JointId])
_TEMPLATE_SPAN = float(np.linalg.norm(TEMPLATE[J.HEAD] - TEMPLATE[J.FOOT_LEFT]))

LEFT_LEG = [J.KNEE_LEFT, J.ANKLE_LEFT, J.FOOT_LEFT]
RIGHT_LEG = [J.KNEE_RIGHT, J.ANKLE_RIGHT, J.FOOT_RIGHT]
LEFT_ARM = [J.WRIST_LEFT, J.HAND_LEFT, J.HAND_TIP_LEFT, J.THUMB_LEFT]
RIGHT_ARM = [J.WRIST_RIGHT, J.HAND_RIGHT, J.HAND_TIP_RIGHT, J.THUMB_RIGHT]
UPPER = [j for j in JointId if j not in (J.KNEE_LEFT, J.ANKLE_LEFT, J.FOOT_LEFT,
                                         J.KNEE_RIGHT, J.ANKLE_RIGHT, J.FOOT_RIGHT)]


def template_scale(height: float) -> float:
    """Uniform scale making the standing template measure ``height`` tall."""
    return (height - HEAD_OFFSET) / _TEMPLATE_SPAN


@dataclass(frozen=True)
class Keyframe:
    """Pose override active for ``start <= t < end``."""

    start: float
    end: float
    kind: str  # "crouch" | "lift" | "reach"
    amount: float = 0.0
    target: tuple[float, float, float] | None = None


@dataclass
class PoseState:
    ground: np.ndarray          # point on the floor under the spine base
    facing: np.ndarray          # horizontal unit vector
    phase: float = 0.0          # gait phase in radians
    swing: float = 0.0          # gait amplitude multiplier, 0 when standing
    crouch: float = 0.0
    lift: float = 0.0
    reach_target: np.ndarray | None = None
    reach_blend: float = 0.0


def pose_skeleton(state: PoseState, height: float, timestamp_us: int = 0) -> Skeleton:
    s = template_scale(height)
    local = TEMPLATE * s  # columns: forward, up, right

    if state.swing:
        a = 0.25 * s * state.swing * math.sin(state.phase)
        local[LEFT_LEG, 0] += [0.5 * a, a, a]
        local[RIGHT_LEG, 0] -= [0.5 * a, a, a]
        local[LEFT_ARM, 0] -= 0.4 * a
        local[RIGHT_ARM, 0] += 0.4 * a
    if state.crouch:
        c = state.crouch
        local[UPPER, 1] -= c
        for knee in (J.KNEE_LEFT, J.KNEE_RIGHT):
            local[knee, 0] += 0.6 * c
            local[knee, 1] -= 0.5 * c

    facing = state.facing / np.linalg.norm(state.facing)
    right = np.cross(facing, UP)
    world = (state.ground + local[:, 0:1] * facing + local[:, 1:2] * UP + local[:, 2:3] * right)
    world[:, 1] += state.lift

    if state.reach_target is not None and state.reach_blend > 0:
        world = _reach(world, np.asarray(state.reach_target, dtype=np.float64), s, state.reach_blend)

    q = matrix_to_quat(look_rotation(facing))
    return Skeleton(world, np.tile(q, (N_JOINTS, 1)), np.full(N_JOINTS, 2), timestamp_us)


def _reach(world: np.ndarray, target: np.ndarray, scale: float, blend: float) -> np.ndarray:
    """Straighten the right arm toward ``target`` with the hand joint on it when in range."""
    shoulder = world[J.SHOULDER_RIGHT]
    to_target = target - shoulder
    dist = float(np.linalg.norm(to_target))
    if dist < 1e-9:
        return world
    d = to_target / dist
    hand_len = 0.60 * scale
    hand = shoulder + d * min(dist, hand_len)
    goal = {
        J.ELBOW_RIGHT: shoulder + d * 0.5 * min(dist, hand_len),
        J.WRIST_RIGHT: hand - d * 0.07 * scale,
        J.HAND_RIGHT: hand,
        J.HAND_TIP_RIGHT: hand + d * 0.08 * scale,
        J.THUMB_RIGHT: hand + d * 0.03 * scale + UP * 0.03 * scale,
    }
    out = world.copy()
    for j, p in goal.items():
        out[j] = (1 - blend) * world[j] + blend * p
    return out


def _polyline(path: Sequence[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(path, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 2:
        raise EmptyPath("path needs at least two vertices")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return pts, np.concatenate([[0.0], np.cumsum(seg)])


def point_along(path: Sequence[Sequence[float]], s: float) -> tuple[np.ndarray, np.ndarray]:
    """Position and unit tangent at arc length ``s`` (clamped to the path)."""
    pts, cum = _polyline(path)
    s = min(max(s, 0.0), cum[-1])
    i = int(np.searchsorted(cum, s, side="right")) - 1
    i = min(max(i, 0), len(pts) - 2)
    # skip zero-length segments when looking for a tangent
    while i < len(pts) - 2 and cum[i + 1] - cum[i] == 0.0:
        i += 1
    seg_len = cum[i + 1] - cum[i]
    d = pts[i + 1] - pts[i]
    if seg_len == 0.0:
        return pts[i].copy(), np.array([1.0, 0.0, 0.0])
    frac = (s - cum[i]) / seg_len
    return pts[i] + frac * d, d / seg_len


def walker(t: float, path: Sequence[Sequence[float]], speed: float, height: float = 1.75,
           overrides: Sequence[Keyframe] = (), stride: float = 1.2) -> Skeleton:
    """Skeleton of a subject walking ``path`` at ``speed``, clamped at the end."""
    if not speed > 0:
        raise ValueError("speed must be positive")
    pts, cum = _polyline(path)
    s = speed * t
    ground, tangent = point_along(pts, s)
    facing = tangent.copy()
    facing[1] = 0.0
    if np.linalg.norm(facing) < 1e-12:
        facing = np.array([1.0, 0.0, 0.0])
    moving = 0.0 <= s < cum[-1]
    state = PoseState(ground, facing, phase=2 * math.pi * min(s, cum[-1]) / (stride * template_scale(height)),
                      swing=1.0 if moving else 0.0)
    apply_overrides(state, t, overrides)
    return pose_skeleton(state, height, int(round(t * 1e6)))


def apply_overrides(state: PoseState, t: float, overrides: Sequence[Keyframe]) -> None:
    for kf in overrides:
        if not kf.start <= t < kf.end:
            continue
        if kf.kind == "crouch":
            state.crouch = max(state.crouch, kf.amount)
        elif kf.kind == "lift":
            state.lift = max(state.lift, kf.amount)
        elif kf.kind == "reach":
            ramp = min(0.3, (kf.end - kf.start) / 2)
            state.reach_target = np.asarray(kf.target, dtype=np.float64)
            state.reach_blend = min(1.0, (t - kf.start) / ramp) if ramp > 0 else 1.0
        else:
            raise ScriptError(f"unknown keyframe kind {kf.kind!r}")


# -- scripts ---------------------------------------------------------------

@dataclass(frozen=True)
class Step:
    kind: str  # "walk" | "strafe" | "wait" | "reach"
    to: tuple[float, float] | None = None
    speed: float | None = None
    duration: float = 0.0
    target: str | tuple[float, float, float] | None = None


@dataclass(frozen=True)
class Region:
    lo: float
    hi: float
    amount: float


@dataclass
class WalkerScript:
    """A timed sequence of steps for one task, evaluated in closed form."""

    start: tuple[float, float]
    steps: list[Step]
    height: float = 1.75
    speed: float = 1.0
    facing: tuple[float, float] = (1.0, 0.0)
    lift: list[Region] = field(default_factory=list)
    crouch: list[Region] = field(default_factory=list)
    stride: float = 1.2

    def __post_init__(self) -> None:
        self._plan: list[tuple[float, float, Step, np.ndarray, np.ndarray, np.ndarray]] = []
        pos = _clamp_area(np.array([self.start[0], 0.0, self.start[1]]))
        facing = _unit_xz(self.facing)
        t = 0.0
        for step in self.steps:
            if step.kind in ("walk", "strafe"):
                dest = _clamp_area(np.array([step.to[0], 0.0, step.to[1]]))
                dist = float(np.linalg.norm(dest - pos))
                dur = dist / (step.speed or self.speed)
                new_facing = facing
                if step.kind == "walk" and dist > 0:
                    new_facing = (dest - pos) / dist
                self._plan.append((t, dur, step, pos, dest, new_facing))
                pos, facing = dest, new_facing
            elif step.kind in ("wait", "reach"):
                dur = step.duration
                self._plan.append((t, dur, step, pos, pos, facing))
            else:
                raise ScriptError(f"unknown step {step.kind!r}")
            t += dur
        self.duration = t
        self._final = (pos, facing)

    def state_at(self, t: float, targets: Callable[[str], Sequence[float]] | None = None) -> PoseState:
        state = None
        for t0, dur, step, a, b, facing in self._plan:
            if t0 <= t < t0 + dur:
                frac = (t - t0) / dur
                ground = a + frac * (b - a)
                state = PoseState(ground, facing.copy())
                if step.kind in ("walk", "strafe"):
                    walked = frac * float(np.linalg.norm(b - a))
                    state.phase = 2 * math.pi * walked / (self.stride * template_scale(self.height))
                    state.swing = 1.0
                elif step.kind == "reach":
                    tgt = step.target
                    if isinstance(tgt, str):
                        if targets is None:
                            raise ScriptError(f"named target {tgt!r} needs a resolver")
                        tgt = targets(tgt)
                    kf = Keyframe(t0, t0 + dur, "reach", target=tuple(tgt))
                    apply_overrides(state, t, [kf])
                break
        if state is None:
            state = PoseState(self._final[0].copy(), self._final[1].copy())
        x = state.ground[0]
        for r in self.lift:
            if r.lo <= x <= r.hi:
                state.lift = max(state.lift, r.amount)
        for r in self.crouch:
            if r.lo <= x <= r.hi:
                state.crouch = max(state.crouch, r.amount)
        return state

    def skeleton_at(self, t: float, targets: Callable[[str], Sequence[float]] | None = None) -> Skeleton:
        return pose_skeleton(self.state_at(t, targets), self.height, int(round(t * 1e6)))


def _unit_xz(v: Sequence[float]) -> np.ndarray:
    f = np.array([v[0], 0.0, v[1]], dtype=np.float64)
    return f / np.linalg.norm(f)


def _clamp_area(p: np.ndarray) -> np.ndarray:
    p = p.copy()
    p[[0, 2]] = np.clip(p[[0, 2]], -AREA_HALF, AREA_HALF)
    return p


def _parse_regions(text: str) -> list[Region]:
    out = []
    for chunk in text.split(";"):
        if chunk.strip():
            lo, hi, amount = (float(v) for v in chunk.split())
            out.append(Region(lo, hi, amount))
    return out


def _parse_step(line: str) -> Step:
    words = line.split()
    kind, args = words[0], words[1:]
    try:
        if kind in ("walk", "strafe"):
            speed = float(args[2]) if len(args) > 2 else None
            return Step(kind, to=(float(args[0]), float(args[1])), speed=speed)
        if kind == "wait":
            return Step(kind, duration=float(args[0]))
        if kind == "reach":
            if len(args) == 2:
                return Step(kind, target=args[0], duration=float(args[1]))
            return Step(kind, target=tuple(float(v) for v in args[:3]), duration=float(args[3]))
    except (IndexError, ValueError) as exc:
        raise ScriptError(f"bad step {line!r}") from exc
    raise ScriptError(f"unknown step {kind!r}")


def load_scripts(path: str | Path) -> dict[int, WalkerScript]:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    return parse_scripts(cp)


def parse_scripts(cp: configparser.ConfigParser) -> dict[int, WalkerScript]:
    base = cp["walker"] if cp.has_section("walker") else {}
    scripts = {}
    for name in cp.sections():
        if not name.startswith("task"):
            continue
        sec = cp[name]

        def get(key, default):
            return sec.get(key, base.get(key, default))

        start = tuple(float(v) for v in get("start", "-1.6 0").split())
        facing = tuple(float(v) for v in get("facing", "1 0").split())
        steps = [_parse_step(line) for line in sec.get("steps", "").splitlines() if line.strip()]
        scripts[int(name[4:])] = WalkerScript(
            start=start, steps=steps,
            height=float(get("height", "1.75")), speed=float(get("speed", "1.0")),
            facing=facing,
            lift=_parse_regions(sec.get("lift", "")), crouch=_parse_regions(sec.get("crouch", "")),
        )
    return scripts


def builtin_script_path(name: str) -> Path:
    return Path(__file__).with_name("data") / f"walker_{name}.ini"

