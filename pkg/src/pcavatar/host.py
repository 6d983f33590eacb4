"""Receiving host: world-frame merge, splat sizing, pacing, PLY export and
TCP ingest of per-sensor wire streams."""

from __future__ import annotations

import logging
import math
import socket
import socketserver
import threading
import time
from collections import deque
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import TextIO

import numpy as np

from . import wire
from .avatar import RigidPose, Skeleton, bone_segments
from .frames import PointCloud, SensorFrame
from .geometry import nearest_segment

log = logging.getLogger(__name__)


class UnknownSensor(KeyError):
    def __init__(self, sensor_id: int):
        super().__init__(sensor_id)
        self.sensor_id = sensor_id

    def __str__(self) -> str:
        return f"no pose configured for sensor {self.sensor_id}"


class IoFailure(OSError):
    pass


@dataclass(frozen=True)
class SplatPolicy:
    r_high: float = 0.008
    stride: int = 4
    r_low_override: float | None = None

    def __post_init__(self) -> None:
        if not self.r_high > 0 or self.stride < 1:
            raise ValueError("r_high must be positive and stride >= 1")
        if self.r_low < self.r_high:
            raise ValueError("r_low must be >= r_high")

    @property
    def r_low(self) -> float:
        # stride-k thinning cuts areal density ~k-fold; radius grows by sqrt(k)
        if self.r_low_override is not None:
            return self.r_low_override
        return self.r_high * math.sqrt(self.stride)


@dataclass(frozen=True)
class Splat:
    center: np.ndarray
    radius: float
    color: tuple[int, int, int]
    normal: np.ndarray | None = None


@dataclass(eq=False)
class Splats:
    """Column-wise splat list."""

    centers: np.ndarray
    radii: np.ndarray
    colors: np.ndarray
    normals: np.ndarray | None = None

    @classmethod
    def empty(cls) -> Splats:
        return cls(np.zeros((0, 3)), np.zeros(0), np.zeros((0, 3), np.uint8))

    def __len__(self) -> int:
        return len(self.centers)

    def __getitem__(self, i: int) -> Splat:
        n = None if self.normals is None else self.normals[i]
        return Splat(self.centers[i], float(self.radii[i]), tuple(int(c) for c in self.colors[i]), n)

    def __iter__(self) -> Iterator[Splat]:
        return (self[i] for i in range(len(self)))

    @classmethod
    def concat(cls, parts: list[Splats]) -> Splats:
        if not parts:
            return cls.empty()
        normals = None
        if all(p.normals is not None for p in parts):
            normals = np.concatenate([p.normals for p in parts])
        return cls(np.concatenate([p.centers for p in parts]), np.concatenate([p.radii for p in parts]),
                   np.concatenate([p.colors for p in parts]), normals)


@dataclass(eq=False)
class MergedFrame:
    frame_index: int
    deadline: float
    splats: Splats
    skeletons: list[tuple[int, Skeleton]] = field(default_factory=list)
    staleness_ms: dict[int, float] = field(default_factory=dict)
    counts: dict[int, int] = field(default_factory=dict)
    stale: set[int] = field(default_factory=set)

    @property
    def skeleton(self) -> Skeleton | None:
        """First world-frame skeleton in sensor order."""
        return self.skeletons[0][1] if self.skeletons else None


def skeleton_normals(points: np.ndarray, skeleton: Skeleton) -> np.ndarray | None:
    """Unit vectors from the nearest bone axis out to each point."""
    seg_a, seg_b, edges = bone_segments(skeleton)
    if not edges:
        return None
    _, which = nearest_segment(points, seg_a, seg_b)
    a, b = seg_a[which], seg_b[which]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    s = np.clip(np.einsum("ij,ij->i", points - a, ab) / np.where(denom > 0, denom, 1.0), 0.0, 1.0)
    radial = points - (a + s[:, None] * ab)
    norm = np.linalg.norm(radial, axis=1, keepdims=True)
    out = np.where(norm > 1e-12, radial / np.where(norm > 1e-12, norm, 1.0), [0.0, 1.0, 0.0])
    return out


def assign_splats(cloud: PointCloud, policy: SplatPolicy = SplatPolicy(),
                  normals_from: Skeleton | None = None) -> Splats:
    if cloud.quality is None:
        raise ValueError("cloud has no quality flags")
    radii = np.where(cloud.quality, policy.r_high, policy.r_low)
    normals = None if normals_from is None else skeleton_normals(cloud.positions, normals_from)
    return Splats(cloud.positions, radii, cloud.colors, normals)


def merge(latest: Mapping[int, SensorFrame], poses: Mapping[int, RigidPose],
          policy: SplatPolicy = SplatPolicy(), normals: bool = False,
          frame_index: int = 0, deadline: float = 0.0) -> MergedFrame:
    """Concatenate all sensors in world coordinates; nothing is fused or dropped."""
    for sid in latest:
        if sid not in poses:
            raise UnknownSensor(sid)
    parts, skeletons, counts = [], [], {}
    world_clouds = {}
    for sid in sorted(latest):
        frame, pose = latest[sid], poses[sid]
        pts = pose.apply(frame.cloud.positions) if len(frame.cloud) else np.zeros((0, 3))
        world_clouds[sid] = PointCloud(pts, frame.cloud.colors, frame.cloud.quality)
        skeletons.extend((sid, sk.transformed(pose)) for sk in frame.skeletons)
        counts[sid] = len(frame.cloud)
    normal_skel = skeletons[0][1] if (normals and skeletons) else None
    for sid, cloud in world_clouds.items():
        own = next((sk for s, sk in skeletons if s == sid), normal_skel)
        parts.append(assign_splats(cloud, policy, own if normals else None))
    return MergedFrame(frame_index, deadline, Splats.concat(parts), skeletons, counts=counts)


# -- live host -------------------------------------------------------------

@dataclass(frozen=True)
class HostEvent:
    time: float
    sensor_id: int | None
    kind: str
    detail: str = ""


class StreamHost:
    """Latest-wins mailboxes fed by ingest threads, read by the pacer.

    A mailbox swap replaces one tuple reference under a lock, so a tick
    sees either the previous or the new frame, never a mix.
    """

    def __init__(self, poses: Mapping[int, RigidPose], policy: SplatPolicy = SplatPolicy(),
                 expiry: float = 0.5, normals: bool = False,
                 clock: Callable[[], float] = time.monotonic, max_events: int = 1000):
        self.poses = dict(poses)
        self.policy = policy
        self.expiry = expiry
        self.normals = normals
        self.clock = clock
        self._mail: dict[int, tuple[SensorFrame, float]] = {}
        self._lock = threading.Lock()
        self.events: deque[HostEvent] = deque(maxlen=max_events)
        self.last_frame: MergedFrame | None = None
        self.last_tick_ms = 0.0
        self.bytes_in = 0

    def submit(self, frame: SensorFrame, received: float | None = None) -> bool:
        received = self.clock() if received is None else received
        if frame.sensor_id not in self.poses:
            self.events.append(HostEvent(received, frame.sensor_id, "unknown_sensor"))
            return False
        with self._lock:
            self._mail[frame.sensor_id] = (frame, received)
        return True

    def submit_bytes(self, data: bytes, received: float | None = None) -> SensorFrame | None:
        received = self.clock() if received is None else received
        try:
            frame = wire.decode(data)
        except wire.WireError as exc:
            self.events.append(HostEvent(received, None, "decode_error", str(exc)))
            return None
        self.bytes_in += len(data)
        return frame if self.submit(frame, received) else None

    def set_poses(self, poses: Mapping[int, RigidPose]) -> None:
        with self._lock:
            self.poses = dict(poses)

    def tick(self, now: float | None = None, frame_index: int = 0, deadline: float | None = None) -> MergedFrame:
        t0 = time.perf_counter()
        now = self.clock() if now is None else now
        with self._lock:
            snapshot = dict(self._mail)
            poses = dict(self.poses)
        fresh, staleness, stale = {}, {}, set()
        for sid, (frame, received) in snapshot.items():
            age = max(0.0, now - received)
            staleness[sid] = age * 1000.0
            if age > self.expiry:
                stale.add(sid)
            else:
                fresh[sid] = frame
        merged = merge(fresh, poses, self.policy, self.normals, frame_index, now if deadline is None else deadline)
        merged.staleness_ms = staleness
        merged.stale = stale
        self.last_frame = merged
        self.last_tick_ms = (time.perf_counter() - t0) * 1000.0
        return merged

    def connected(self) -> list[int]:
        with self._lock:
            return sorted(self._mail)


def pace(host: StreamHost, fps: float = 30.0, clock: Callable[[], float] | None = None,
         sleep: Callable[[float], None] = time.sleep, max_ticks: int | None = None,
         stop: threading.Event | None = None) -> Iterator[MergedFrame]:
    """Emit one merged frame per ``1/fps`` tick without waiting on any sensor.

    Ticks fall on a fixed grid from the start time; if the consumer falls
    more than a period behind, the missed grid points are skipped rather
    than emitted in a burst.
    """
    if not fps > 0:
        raise ValueError("fps must be positive")
    clock = clock or host.clock
    period = 1.0 / fps
    start = clock()
    k = 0
    emitted = 0
    while (max_ticks is None or emitted < max_ticks) and not (stop and stop.is_set()):
        deadline = start + k * period
        now = clock()
        if now < deadline:
            sleep(deadline - now)
            now = clock()
        elif now - deadline >= period:
            k = int((now - start) / period)
            deadline = start + k * period
        yield host.tick(now, k, deadline)
        emitted += 1
        k += 1


def metrics_line(frame: MergedFrame, tick_ms: float) -> str:
    stale = ",".join(f"{sid}:{ms:.1f}{'!' if sid in frame.stale else ''}"
                     for sid, ms in sorted(frame.staleness_ms.items()))
    return f"tick={frame.frame_index} splats={len(frame.splats)} staleness_ms={stale or '-'} tick_ms={tick_ms:.3f}"


# -- PLY -------------------------------------------------------------------

def write_ply(splats: Splats, f: TextIO) -> None:
    """ASCII PLY with position, colour and a per-vertex splat radius."""
    n = len(splats)
    f.write("\n".join([
        "ply", "format ascii 1.0", "comment pcavatar merged splats",
        f"element vertex {n}",
        "property float x", "property float y", "property float z",
        "property uchar red", "property uchar green", "property uchar blue",
        "property float radius", "end_header",
    ]) + "\n")
    if n:
        rows = np.column_stack([splats.centers, splats.colors.astype(np.float64), splats.radii])
        np.savetxt(f, rows, fmt=["%.9g"] * 3 + ["%d"] * 3 + ["%.9g"])


def export_ply(frame: MergedFrame | Splats, path: str | Path) -> None:
    splats = frame.splats if isinstance(frame, MergedFrame) else frame
    try:
        with open(path, "w") as f:
            write_ply(splats, f)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_ply(path: str | Path) -> Splats:
    with open(path) as f:
        lines = f.read().splitlines()
    end = lines.index("end_header")
    n = next(int(line.split()[2]) for line in lines[:end] if line.startswith("element vertex"))
    if n == 0:
        return Splats.empty()
    rows = np.loadtxt(lines[end + 1:end + 1 + n], ndmin=2)
    return Splats(rows[:, 0:3], rows[:, 6], rows[:, 3:6].astype(np.uint8))


# -- TCP ingest ------------------------------------------------------------

class _IngestHandler(socketserver.BaseRequestHandler):
    server: IngestServer

    def handle(self) -> None:
        host = self.server.stream_host
        assembler = wire.FrameAssembler()
        peer = f"{self.client_address[0]}:{self.client_address[1]}"
        while True:
            try:
                chunk = self.request.recv(1 << 16)
            except OSError:
                break
            if not chunk:
                break
            try:
                payloads = assembler.feed(chunk)
            except wire.WireError as exc:
                host.events.append(HostEvent(host.clock(), None, "stream_error", f"{peer}: {exc}"))
                break
            for data in payloads:
                try:
                    frame = wire.decode(data)
                except wire.WireError as exc:
                    # a corrupt frame ends this connection only
                    host.events.append(HostEvent(host.clock(), None, "decode_error", f"{peer}: {exc}"))
                    log.warning("closing %s after decode error: %s", peer, exc)
                    return
                host.bytes_in += len(data)
                host.submit(frame)


class IngestServer(socketserver.ThreadingMixIn, socketserver.TCPServer):
    """One thread per sensor connection, feeding a shared :class:`StreamHost`."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], stream_host: StreamHost):
        super().__init__(address, _IngestHandler)
        self.stream_host = stream_host

    def start(self) -> threading.Thread:
        th = threading.Thread(target=self.serve_forever, name="ingest", daemon=True)
        th.start()
        return th


def parse_address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


class SensorLink:
    """Client side of one sensor connection."""

    def __init__(self, address: tuple[str, int], timeout: float = 5.0):
        self.sock = socket.create_connection(address, timeout=timeout)

    def send(self, frame: SensorFrame) -> int:
        payload = wire.frame_with_prefix(wire.encode(frame))
        self.sock.sendall(payload)
        return len(payload)

    def close(self) -> None:
        self.sock.close()

    def __enter__(self) -> SensorLink:
        return self

    def __exit__(self, *exc) -> None:
        self.close()
