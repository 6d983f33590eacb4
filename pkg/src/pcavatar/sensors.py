"""Synthetic depth-sensor capture: body surface sampling, frustum/range
culling and the sensor layout file."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .avatar import BONES, JointId, RigidPose, Skeleton, look_rotation
from .frames import PointCloud, SensorFrame

J = JointId

TORSO_BONES = {(J.SPINE_BASE, J.SPINE_MID), (J.SPINE_MID, J.SPINE_SHOULDER)}
HEAD_BONES = {(J.NECK, J.HEAD)}
SKIN_JOINTS = {J.HEAD, J.HAND_LEFT, J.HAND_RIGHT, J.HAND_TIP_LEFT, J.HAND_TIP_RIGHT,
               J.THUMB_LEFT, J.THUMB_RIGHT}
LEG_JOINTS = {J.HIP_LEFT, J.KNEE_LEFT, J.ANKLE_LEFT, J.FOOT_LEFT,
              J.HIP_RIGHT, J.KNEE_RIGHT, J.ANKLE_RIGHT, J.FOOT_RIGHT}

SKIN = (224, 172, 140)
SHIRT = (40, 90, 170)
TROUSERS = (50, 50, 60)


@dataclass(frozen=True)
class SensorConfig:
    sensor_id: int
    pose: RigidPose
    h_fov: float = 70.0
    v_fov: float = 60.0
    min_range: float = 0.4
    max_range: float = 4.5
    skeleton_range: float = 2.5

    def __post_init__(self) -> None:
        if not 0 <= self.sensor_id <= 254:
            raise ValueError(f"sensor_id {self.sensor_id} outside 0-254")
        if not 0 < self.min_range < self.skeleton_range <= self.max_range:
            raise ValueError("require 0 < min_range < skeleton_range <= max_range")
        if not (0 < self.h_fov < 180 and 0 < self.v_fov < 180):
            raise ValueError("field of view must be in (0, 180) degrees")

    def visible(self, local: np.ndarray) -> np.ndarray:
        """Frustum and range test for sensor-local points ``(N, 3)``; +z is the optical axis."""
        x, y, z = local[:, 0], local[:, 1], local[:, 2]
        rng = np.linalg.norm(local, axis=1)
        in_h = np.abs(np.degrees(np.arctan2(x, z))) <= self.h_fov / 2
        in_v = np.abs(np.degrees(np.arctan2(y, z))) <= self.v_fov / 2
        return (z > 0) & in_h & in_v & (rng >= self.min_range) & (rng <= self.max_range)


@dataclass(frozen=True)
class BodyModel:
    torso_radius: float = 0.14
    limb_radius: float = 0.05
    head_radius: float = 0.10
    density: float = 2000.0  # points per m^2 of capsule surface

    def __post_init__(self) -> None:
        if min(self.torso_radius, self.limb_radius, self.head_radius) <= 0:
            raise ValueError("capsule radii must be positive")
        if self.density < 0:
            raise ValueError("density must be non-negative")

    def radius(self, bone: tuple[JointId, JointId]) -> float:
        if bone in TORSO_BONES:
            return self.torso_radius
        if bone in HEAD_BONES:
            return self.head_radius
        return self.limb_radius

    @property
    def max_radius(self) -> float:
        return max(self.torso_radius, self.limb_radius, self.head_radius)


def _bone_color(bone: tuple[JointId, JointId]) -> tuple[int, int, int]:
    if bone[1] in SKIN_JOINTS:
        return SKIN
    if bone[1] in LEG_JOINTS:
        return TROUSERS
    return SHIRT


def _perpendicular_basis(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x, y, z = axis
    # cross with whichever of x/y is less parallel to the axis
    u = np.array([0.0, z, -y]) if abs(x) < 0.9 else np.array([-z, 0.0, x])
    u /= np.sqrt(u @ u)
    v = np.array([y * u[2] - z * u[1], z * u[0] - x * u[2], x * u[1] - y * u[0]])
    return u, v


def sample_capsule(a: np.ndarray, b: np.ndarray, radius: float, n: int,
                   rng: np.random.Generator) -> np.ndarray:
    """``n`` points uniform by area on the capsule around segment ``a``-``b``."""
    ab = b - a
    length = float(np.linalg.norm(ab))
    if length == 0.0:
        d = rng.normal(size=(n, 3))
        return a + radius * d / np.linalg.norm(d, axis=1, keepdims=True)
    axis = ab / length
    u, v = _perpendicular_basis(axis)
    side_area = 2 * np.pi * radius * length
    cap_area = 4 * np.pi * radius**2
    on_side = rng.random(n) < side_area / (side_area + cap_area)

    out = np.empty((n, 3))
    k = int(on_side.sum())
    theta = rng.uniform(0, 2 * np.pi, k)
    s = rng.uniform(0, length, k)
    out[on_side] = (a + s[:, None] * axis
                    + radius * (np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * v))

    m = n - k
    d = rng.normal(size=(m, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    along = d @ axis
    # d on the +axis hemisphere belongs to the cap at b, the rest to the cap at a
    centers = np.where((along >= 0)[:, None], b, a)
    out[~on_side] = centers + radius * d
    return out


def synth_body_cloud(skeleton: Skeleton, model: BodyModel = BodyModel(), seed: int = 0) -> PointCloud:
    """Deterministic point samples on capsules around every usable bone."""
    rng = np.random.default_rng(seed)
    positions, colors = [], []
    for bone in BONES:
        if not (skeleton.is_usable(bone[0]) and skeleton.is_usable(bone[1])):
            continue
        a, b = skeleton.positions[bone[0]], skeleton.positions[bone[1]]
        r = model.radius(bone)
        area = 2 * np.pi * r * float(np.linalg.norm(b - a)) + 4 * np.pi * r * r
        n = int(round(model.density * area))
        if n == 0:
            continue
        positions.append(sample_capsule(a, b, r, n, rng))
        base = np.array(_bone_color(bone), dtype=np.int16)
        shade = rng.integers(-12, 13, size=(n, 1), dtype=np.int16)
        colors.append(np.clip(base + shade, 0, 255).astype(np.uint8))
    if not positions:
        return PointCloud.empty()
    return PointCloud(np.concatenate(positions), np.concatenate(colors))


def synth_background(n: int, seed: int = 0, half_extent: float = 2.0) -> PointCloud:
    """Floor clutter across the capture area, for exercising segmentation."""
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(-half_extent, half_extent, n), np.zeros(n),
                           rng.uniform(-half_extent, half_extent, n)])
    grey = rng.integers(90, 140, size=(n, 1))
    return PointCloud(pts, np.repeat(grey, 3, axis=1))


def sensor_capture(world: PointCloud, skeletons: list[Skeleton], cfg: SensorConfig, ts: int) -> SensorFrame:
    """What one sensor sees of a world-frame scene, in sensor-local coordinates.

    A skeleton is reported only when its spine base is inside the frustum
    and no farther than ``skeleton_range``.
    """
    to_local = cfg.pose.inverse()
    local = to_local.apply(world.positions) if len(world) else np.zeros((0, 3))
    keep = cfg.visible(local)
    cloud = PointCloud(local[keep], world.colors[keep])

    seen = []
    for sk in skeletons:
        local_sk = sk.transformed(to_local)
        base = local_sk.positions[J.SPINE_BASE][None, :]
        if not sk.is_usable(J.SPINE_BASE):
            continue
        in_view = bool(cfg.visible(base)[0])
        if in_view and np.linalg.norm(base) <= cfg.skeleton_range:
            seen.append(local_sk.replace(timestamp_us=ts))
    return SensorFrame(cfg.sensor_id, ts, cloud, seen)


# -- layouts ---------------------------------------------------------------

@dataclass
class Layout:
    sensors: list[SensorConfig] = field(default_factory=list)

    def __iter__(self):
        return iter(self.sensors)

    def __len__(self) -> int:
        return len(self.sensors)

    @property
    def poses(self) -> dict[int, RigidPose]:
        return {s.sensor_id: s.pose for s in self.sensors}

    def by_id(self, sensor_id: int) -> SensorConfig:
        for s in self.sensors:
            if s.sensor_id == sensor_id:
                return s
        raise KeyError(sensor_id)

    def with_poses(self, poses: dict[int, RigidPose]) -> Layout:
        return Layout([SensorConfig(s.sensor_id, poses.get(s.sensor_id, s.pose), s.h_fov, s.v_fov,
                                    s.min_range, s.max_range, s.skeleton_range) for s in self.sensors])


def aimed_pose(position, target) -> RigidPose:
    position = np.asarray(position, dtype=np.float64)
    return RigidPose(look_rotation(np.asarray(target, dtype=np.float64) - position), position)


def default_layout(n_sensors: int = 5, wall_offset: float = 2.3, mount_height: float = 1.2,
                   aim=(0.0, 1.0, 0.0)) -> Layout:
    """Four wall midpoints plus one corner around a 4 x 4 m area centred on the origin."""
    w = wall_offset
    spots = [(w, 0.0), (0.0, w), (-w, 0.0), (0.0, -w), (w, w)]
    if not 1 <= n_sensors <= len(spots):
        raise ValueError(f"default layout has 1-{len(spots)} sensors")
    return Layout([SensorConfig(i, aimed_pose((x, mount_height, z), aim))
                   for i, (x, z) in enumerate(spots[:n_sensors])])


def _floats(text: str, n: int) -> list[float]:
    vals = [float(v) for v in text.replace(",", " ").split()]
    if len(vals) != n:
        raise ValueError(f"expected {n} numbers, got {text!r}")
    return vals


def load_layout(path: str | Path) -> Layout:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    sensors = []
    for name in cp.sections():
        if not name.startswith("sensor."):
            continue
        sec = cp[name]
        sensors.append(SensorConfig(
            sensor_id=int(name.split(".", 1)[1]),
            pose=RigidPose.from_quat(_floats(sec["orientation"], 4), _floats(sec["position"], 3)),
            h_fov=sec.getfloat("h_fov", 70.0),
            v_fov=sec.getfloat("v_fov", 60.0),
            min_range=sec.getfloat("min_range", 0.4),
            max_range=sec.getfloat("max_range", 4.5),
            skeleton_range=sec.getfloat("skeleton_range", 2.5),
        ))
    sensors.sort(key=lambda s: s.sensor_id)
    return Layout(sensors)


def save_layout(layout: Layout, path: str | Path, rmse: dict[int, float] | None = None) -> None:
    cp = configparser.ConfigParser()
    for s in layout:
        sec = {
            "position": " ".join(repr(float(v)) for v in s.pose.translation),
            "orientation": " ".join(repr(float(v)) for v in s.pose.quat),
            "h_fov": repr(s.h_fov),
            "v_fov": repr(s.v_fov),
            "min_range": repr(s.min_range),
            "max_range": repr(s.max_range),
            "skeleton_range": repr(s.skeleton_range),
        }
        if rmse and s.sensor_id in rmse:
            sec["calibration_rmse"] = repr(rmse[s.sensor_id])
        cp[f"sensor.{s.sensor_id}"] = sec
    with open(path, "w") as f:
        f.write("# sensor layout: position in meters (world, y up); orientation quaternion w x y z\n")
        cp.write(f)
