"""Binary wire format for sensor frames.

All fields little-endian.

Header, 20 bytes::

    magic "PCAV" (4) | version u8 = 1 | sensor_id u8 | joint_count u8 |
    flags u8 = 0 | timestamp_us u64 | point_count u32

Joint record, 30 bytes::

    joint_code u8 | state u8 | position 3 x f32 | orientation (w,x,y,z) 4 x f32

Point record, 16 bytes::

    x, y, z f32 | r, g, b u8 | q u8 (bit 0 = high quality, bits 1-7 zero)

Frames travel over a stream as ``u32 length`` followed by the frame bytes.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .avatar import N_JOINTS, Skeleton, TrackingState
from .frames import PointCloud, SensorFrame

MAGIC = b"PCAV"
VERSION = 1
HEADER = struct.Struct("<4sBBBBQI")
HEADER_SIZE = HEADER.size
JOINT_DTYPE = np.dtype([("code", "u1"), ("state", "u1"), ("pos", "<f4", (3,)), ("ori", "<f4", (4,))])
POINT_DTYPE = np.dtype([("pos", "<f4", (3,)), ("rgb", "u1", (3,)), ("q", "u1")])
JOINT_SIZE = JOINT_DTYPE.itemsize
POINT_SIZE = POINT_DTYPE.itemsize
LENGTH_PREFIX = struct.Struct("<I")
MAX_POINTS = 2**32 - 1

assert HEADER_SIZE == 20 and JOINT_SIZE == 30 and POINT_SIZE == 16


class WireError(ValueError):
    pass


class BadMagic(WireError):
    pass


class VersionMismatch(WireError):
    def __init__(self, found: int):
        super().__init__(f"unsupported wire version {found} (expected {VERSION})")
        self.found = found


class Truncated(WireError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"truncated frame: expected {expected} bytes, got {got}")
        self.expected = expected
        self.got = got


class TrailingBytes(WireError):
    pass


class InvalidJointCode(WireError):
    pass


class InvalidField(WireError):
    pass


class TooManyPoints(WireError):
    pass


class MultiSkeletonUnsupported(WireError):
    pass


def frame_size(n_joints: int, n_points: int) -> int:
    if n_joints < 0 or n_points < 0:
        raise ValueError("counts must be non-negative")
    return HEADER_SIZE + JOINT_SIZE * n_joints + POINT_SIZE * n_points


def encode(frame: SensorFrame) -> bytes:
    """Serialize a decimated frame.

    The skeleton shares the frame timestamp on the wire; its own
    ``timestamp_us`` is not transmitted.
    """
    if len(frame.skeletons) > 1:
        raise MultiSkeletonUnsupported(f"{len(frame.skeletons)} skeletons in one frame")
    cloud = frame.cloud
    n = len(cloud)
    if n > MAX_POINTS:
        raise TooManyPoints(f"{n} points")
    if cloud.quality is None:
        raise ValueError("frame cloud carries no quality flags; decimate it first")
    if not 0 <= frame.sensor_id <= 254:
        raise ValueError(f"sensor_id {frame.sensor_id} outside 0-254")
    n_joints = N_JOINTS if frame.skeletons else 0

    header = HEADER.pack(MAGIC, VERSION, frame.sensor_id, n_joints, 0, frame.timestamp_us, n)

    joints = np.empty(n_joints, JOINT_DTYPE)
    if n_joints:
        sk = frame.skeletons[0]
        joints["code"] = np.arange(N_JOINTS)
        joints["state"] = sk.states
        joints["pos"] = sk.positions
        joints["ori"] = sk.orientations

    points = np.empty(n, POINT_DTYPE)
    points["pos"] = cloud.positions
    points["rgb"] = cloud.colors
    points["q"] = cloud.quality
    if not (np.isfinite(points["pos"]).all() and np.isfinite(joints["pos"]).all()
            and np.isfinite(joints["ori"]).all()):
        raise InvalidField("non-finite value (or beyond float32 range) in frame")
    return b"".join((header, joints.tobytes(), points.tobytes()))


def decode(data: bytes | bytearray | memoryview) -> SensorFrame:
    """Parse one frame; total over arbitrary input (raises :class:`WireError`)."""
    buf = memoryview(data).cast("B")
    got = len(buf)
    if bytes(buf[:4]) != MAGIC[:min(4, got)] or got == 0:
        raise BadMagic(f"bad magic {bytes(buf[:4])!r}")
    if got < HEADER_SIZE:
        raise Truncated(HEADER_SIZE, got)
    _, version, sensor_id, n_joints, flags, ts, n_points = HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise VersionMismatch(version)
    if flags != 0:
        raise InvalidField(f"reserved flags set: {flags:#04x}")
    if n_joints > N_JOINTS:
        raise InvalidJointCode(f"joint_count {n_joints} exceeds {N_JOINTS}")
    expected = frame_size(n_joints, n_points)
    # validate declared counts before any allocation
    if got < expected:
        raise Truncated(expected, got)
    if got > expected:
        raise TrailingBytes(f"{got - expected} bytes after frame end")

    skeletons = []
    if n_joints:
        rec = np.frombuffer(buf, JOINT_DTYPE, n_joints, HEADER_SIZE)
        codes = rec["code"]
        if codes.max() >= N_JOINTS or len(np.unique(codes)) != n_joints:
            raise InvalidJointCode(f"invalid or duplicate joint codes {codes.tolist()}")
        if rec["state"].max() > TrackingState.TRACKED:
            raise InvalidField("invalid joint tracking state")
        if not (np.isfinite(rec["pos"]).all() and np.isfinite(rec["ori"]).all()):
            raise InvalidField("non-finite joint value")
        positions = np.zeros((N_JOINTS, 3))
        orientations = np.tile([1.0, 0.0, 0.0, 0.0], (N_JOINTS, 1))
        states = np.zeros(N_JOINTS, np.uint8)
        positions[codes] = rec["pos"]
        orientations[codes] = rec["ori"]
        states[codes] = rec["state"]
        skeletons.append(Skeleton(positions, orientations, states, ts))

    pts = np.frombuffer(buf, POINT_DTYPE, n_points, HEADER_SIZE + JOINT_SIZE * n_joints)
    q = pts["q"]
    if n_points and q.max() > 1:
        raise InvalidField("reserved quality bits set")
    pos = pts["pos"].astype(np.float64)
    if not np.isfinite(pos).all():
        raise InvalidField("non-finite point coordinate")
    cloud = PointCloud(pos, pts["rgb"].copy(), q.astype(bool))
    return SensorFrame(sensor_id, ts, cloud, skeletons)


# -- stream framing --------------------------------------------------------

def write_frame(stream: BinaryIO, payload: bytes) -> None:
    stream.write(LENGTH_PREFIX.pack(len(payload)))
    stream.write(payload)


def frame_with_prefix(payload: bytes) -> bytes:
    return LENGTH_PREFIX.pack(len(payload)) + payload


class FrameAssembler:
    """Incremental splitter for a length-prefixed byte stream.

    Feed arbitrary chunks; complete frame payloads come out in order.
    Frames declared larger than ``max_frame`` are refused before buffering.
    """

    def __init__(self, max_frame: int = frame_size(N_JOINTS, 4_000_000)):
        self._buf = bytearray()
        self.max_frame = max_frame

    def feed(self, chunk: bytes) -> list[bytes]:
        self._buf += chunk
        out = []
        while len(self._buf) >= LENGTH_PREFIX.size:
            (size,) = LENGTH_PREFIX.unpack_from(self._buf, 0)
            if size > self.max_frame:
                raise WireError(f"declared frame length {size} exceeds limit {self.max_frame}")
            end = LENGTH_PREFIX.size + size
            if len(self._buf) < end:
                break
            out.append(bytes(self._buf[LENGTH_PREFIX.size:end]))
            del self._buf[:end]
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)
