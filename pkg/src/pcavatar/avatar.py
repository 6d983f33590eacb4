"""Skeletal and geometric types shared by every pipeline stage.

Vectors are plain ``numpy`` arrays of shape ``(3,)`` in meters; quaternions
are ``(w, x, y, z)`` arrays.  World frame is y-up.  Camera-like frames
(sensors, viewpoints, joint orientations) use +z forward, +y up and
x = y cross z.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

UP = np.array([0.0, 1.0, 0.0])


class MissingJoint(ValueError):
    """A joint needed by an operation is not tracked."""


class JointId(enum.IntEnum):
    SPINE_BASE = 0
    SPINE_MID = 1
    NECK = 2
    HEAD = 3
    SHOULDER_LEFT = 4
    ELBOW_LEFT = 5
    WRIST_LEFT = 6
    HAND_LEFT = 7
    SHOULDER_RIGHT = 8
    ELBOW_RIGHT = 9
    WRIST_RIGHT = 10
    HAND_RIGHT = 11
    HIP_LEFT = 12
    KNEE_LEFT = 13
    ANKLE_LEFT = 14
    FOOT_LEFT = 15
    HIP_RIGHT = 16
    KNEE_RIGHT = 17
    ANKLE_RIGHT = 18
    FOOT_RIGHT = 19
    SPINE_SHOULDER = 20
    HAND_TIP_LEFT = 21
    THUMB_LEFT = 22
    HAND_TIP_RIGHT = 23
    THUMB_RIGHT = 24


N_JOINTS = len(JointId)


class TrackingState(enum.IntEnum):
    NOT_TRACKED = 0
    INFERRED = 1
    TRACKED = 2


J = JointId

# Parent -> child tree rooted at the spine base.
BONES: tuple[tuple[JointId, JointId], ...] = (
    (J.SPINE_BASE, J.SPINE_MID),
    (J.SPINE_MID, J.SPINE_SHOULDER),
    (J.SPINE_SHOULDER, J.NECK),
    (J.NECK, J.HEAD),
    (J.SPINE_SHOULDER, J.SHOULDER_LEFT),
    (J.SHOULDER_LEFT, J.ELBOW_LEFT),
    (J.ELBOW_LEFT, J.WRIST_LEFT),
    (J.WRIST_LEFT, J.HAND_LEFT),
    (J.HAND_LEFT, J.HAND_TIP_LEFT),
    (J.WRIST_LEFT, J.THUMB_LEFT),
    (J.SPINE_SHOULDER, J.SHOULDER_RIGHT),
    (J.SHOULDER_RIGHT, J.ELBOW_RIGHT),
    (J.ELBOW_RIGHT, J.WRIST_RIGHT),
    (J.WRIST_RIGHT, J.HAND_RIGHT),
    (J.HAND_RIGHT, J.HAND_TIP_RIGHT),
    (J.WRIST_RIGHT, J.THUMB_RIGHT),
    (J.SPINE_BASE, J.HIP_LEFT),
    (J.HIP_LEFT, J.KNEE_LEFT),
    (J.KNEE_LEFT, J.ANKLE_LEFT),
    (J.ANKLE_LEFT, J.FOOT_LEFT),
    (J.SPINE_BASE, J.HIP_RIGHT),
    (J.HIP_RIGHT, J.KNEE_RIGHT),
    (J.KNEE_RIGHT, J.ANKLE_RIGHT),
    (J.ANKLE_RIGHT, J.FOOT_RIGHT),
)


def as_vec3(v: Sequence[float] | np.ndarray) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite vector: {a}")
    return a


# -- quaternions -----------------------------------------------------------

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion with w >= 0 (Shepperd's method)."""
    m = np.asarray(m, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product; works row-wise on ``(..., 4)`` arrays."""
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=np.float64), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=np.float64), -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def look_rotation(forward: np.ndarray, up: np.ndarray = UP) -> np.ndarray:
    """Rotation whose +z column is ``forward`` and whose +y leans toward ``up``."""
    z = np.asarray(forward, dtype=np.float64)
    z = z / np.linalg.norm(z)
    x = np.cross(up, z)
    if np.linalg.norm(x) < 1e-9:
        # forward parallel to up; pick any perpendicular
        x = np.cross([0.0, 0.0, 1.0], z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def rotation_angle(r: np.ndarray) -> float:
    """Angle of a rotation matrix, accurate near zero."""
    s = 0.5 * np.linalg.norm([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    c = 0.5 * (np.trace(r) - 1.0)
    return float(np.arctan2(s, c))


# -- rigid poses -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RigidPose:
    """Maps local coordinates to a parent frame: ``p -> R @ p + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = as_vec3(self.translation)
        if abs(np.linalg.det(r) - 1.0) > 1e-9 or not np.allclose(r.T @ r, np.eye(3), rtol=0, atol=1e-9):
            raise ValueError("rotation is not a proper orthonormal matrix")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidPose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quat(cls, q: Sequence[float], t: Sequence[float]) -> RigidPose:
        return cls(quat_to_matrix(np.asarray(q)), t)

    @property
    def quat(self) -> np.ndarray:
        return matrix_to_quat(self.rotation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform a single point ``(3,)`` or a batch ``(N, 3)``."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> RigidPose:
        rt = self.rotation.T
        return RigidPose(rt, -rt @ self.translation)

    def compose(self, other: RigidPose) -> RigidPose:
        """``self ∘ other``: apply ``other`` first."""
        return RigidPose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RigidPose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation)

    def __repr__(self) -> str:
        return f"RigidPose(quat={np.round(self.quat, 6).tolist()}, t={np.round(self.translation, 6).tolist()})"


def transform(pose: RigidPose, p: np.ndarray) -> np.ndarray:
    return pose.apply(p)


# -- skeletons -------------------------------------------------------------

@dataclass(frozen=True)
class Joint:
    id: JointId
    position: np.ndarray
    orientation: np.ndarray
    state: TrackingState

    @property
    def usable(self) -> bool:
        return self.state != TrackingState.NOT_TRACKED


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Fixed-order set of all 25 joints, stored column-wise.

    ``positions`` is ``(25, 3)``, ``orientations`` ``(25, 4)``, ``states``
    ``(25,)`` of :class:`TrackingState` codes.  Row ``i`` is ``JointId(i)``.
    """

    positions: np.ndarray
    orientations: np.ndarray
    states: np.ndarray
    timestamp_us: int = 0

    def __post_init__(self) -> None:
        pos = np.array(self.positions, dtype=np.float64).reshape(N_JOINTS, 3)
        ori = np.array(self.orientations, dtype=np.float64).reshape(N_JOINTS, 4)
        st = np.array(self.states, dtype=np.uint8).reshape(N_JOINTS)
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(ori)):
            raise ValueError("skeleton contains non-finite values")
        if st.max(initial=0) > TrackingState.TRACKED:
            raise ValueError("invalid tracking state code")
        for a in (pos, ori, st):
            a.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "orientations", ori)
        object.__setattr__(self, "states", st)
        object.__setattr__(self, "timestamp_us", int(self.timestamp_us))

    @classmethod
    def from_positions(cls, positions: np.ndarray, timestamp_us: int = 0,
                       state: TrackingState = TrackingState.TRACKED) -> Skeleton:
        return cls(positions, np.tile(IDENTITY_QUAT, (N_JOINTS, 1)), np.full(N_JOINTS, state), timestamp_us)

    @property
    def usable(self) -> np.ndarray:
        return self.states != TrackingState.NOT_TRACKED

    def is_usable(self, jid: JointId) -> bool:
        return bool(self.states[jid] != TrackingState.NOT_TRACKED)

    def joint(self, jid: JointId) -> Joint:
        jid = JointId(jid)
        return Joint(jid, self.positions[jid], self.orientations[jid], TrackingState(int(self.states[jid])))

    @property
    def joints(self) -> tuple[Joint, ...]:
        return tuple(self.joint(j) for j in JointId)

    def __iter__(self) -> Iterator[Joint]:
        return iter(self.joints)

    def position(self, jid: JointId) -> np.ndarray:
        if not self.is_usable(jid):
            raise MissingJoint(JointId(jid).name)
        return self.positions[jid]

    def transformed(self, pose: RigidPose) -> Skeleton:
        return Skeleton(
            pose.apply(self.positions),
            quat_mul(pose.quat, self.orientations),
            self.states,
            self.timestamp_us,
        )

    def replace(self, **kw) -> Skeleton:
        fields = dict(positions=self.positions, orientations=self.orientations,
                      states=self.states, timestamp_us=self.timestamp_us)
        fields.update(kw)
        return Skeleton(**fields)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Skeleton):
            return NotImplemented
        return (self.timestamp_us == other.timestamp_us
                and np.array_equal(self.states, other.states)
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.orientations, other.orientations))


def bone_segments(skeleton: Skeleton) -> tuple[np.ndarray, np.ndarray, list[tuple[JointId, JointId]]]:
    """Endpoints ``(A, B)`` of every bone whose two joints are usable."""
    edges = [e for e in BONES if skeleton.is_usable(e[0]) and skeleton.is_usable(e[1])]
    idx_a = [a for a, _ in edges]
    idx_b = [b for _, b in edges]
    return skeleton.positions[idx_a], skeleton.positions[idx_b], edges


def body_height(skeleton: Skeleton, head_offset: float = 0.10) -> float:
    """Head-to-foot distance plus the head-top offset.

    The farther usable foot is used; for an upright body that is the lower
    one, and choosing by distance keeps the estimate rigid-invariant.
    """
    head = skeleton.position(J.HEAD)
    feet = [skeleton.positions[f] for f in (J.FOOT_LEFT, J.FOOT_RIGHT) if skeleton.is_usable(f)]
    if not feet:
        raise MissingJoint("both feet are not tracked")
    return float(max(np.linalg.norm(head - f) for f in feet) + head_offset)


def facing_direction(skeleton: Skeleton) -> np.ndarray:
    """Horizontal unit vector the body faces, from shoulders or hips."""
    for left, right in ((J.SHOULDER_LEFT, J.SHOULDER_RIGHT), (J.HIP_LEFT, J.HIP_RIGHT)):
        if skeleton.is_usable(left) and skeleton.is_usable(right):
            lateral = skeleton.positions[right] - skeleton.positions[left]
            f = np.cross(UP, lateral)
            f[1] = 0.0
            n = np.linalg.norm(f)
            if n > 1e-9:
                return f / n
    f = quat_to_matrix(skeleton.orientations[J.HEAD])[:, 2].copy()
    f[1] = 0.0
    n = np.linalg.norm(f)
    if n < 1e-9:
        raise MissingJoint("cannot determine facing direction")
    return f / n


# -- abstract avatar -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True, eq=False)
class Cylinder:
    a: np.ndarray
    b: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("cylinder radius must be positive")
        if np.array_equal(self.a, self.b):
            raise ValueError("cylinder endpoints coincide")


Primitive = Sphere | Cylinder


def abstract_avatar(skeleton: Skeleton, joint_radius: float = 0.05, bone_radius: float = 0.03,
                    graph: Sequence[tuple[JointId, JointId]] = BONES) -> list[Primitive]:
    """One sphere per usable joint, then one cylinder per fully usable bone.

    Bones whose endpoints coincide exactly are skipped.
    """
    if not joint_radius > 0 or not bone_radius > 0:
        raise ValueError("joint_radius and bone_radius must be positive")
    prims: list[Primitive] = [
        Sphere(skeleton.positions[j].copy(), joint_radius) for j in JointId if skeleton.is_usable(j)
    ]
    for a, b in graph:
        if skeleton.is_usable(a) and skeleton.is_usable(b):
            pa, pb = skeleton.positions[a], skeleton.positions[b]
            if not np.array_equal(pa, pb):
                prims.append(Cylinder(pa.copy(), pb.copy(), bone_radius))
    return prims


# -- viewpoints ------------------------------------------------------------

class Perspective(enum.Enum):
    FIRST_PERSON = "1pp"
    THIRD_PERSON = "3pp"


@dataclass(frozen=True)
class CameraOffsets:
    up: float = 0.25
    back: float = 1.0


def camera_pose(skeleton: Skeleton, perspective: Perspective,
                cfg: CameraOffsets = CameraOffsets()) -> RigidPose:
    head = skeleton.position(J.HEAD)
    head_rot = quat_to_matrix(skeleton.orientations[J.HEAD])
    if perspective is Perspective.FIRST_PERSON:
        return RigidPose(head_rot, head)
    facing = facing_direction(skeleton)
    eye = head + UP * cfg.up - facing * cfg.back
    look = head - eye
    if np.linalg.norm(look) < 1e-12:
        return RigidPose(head_rot, eye)
    return RigidPose(look_rotation(look), eye)
