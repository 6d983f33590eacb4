"""Sensor-side processing and the end-to-end synthetic capture chain.

A :class:`SensorNode` plays the computer attached to one sensor: capture,
segment, decimate, encode.  :func:`scene_frames` runs every node of a
layout over one world scene.
"""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass

from . import wire
from .avatar import Skeleton
from .decimation import DecimationParams, decimate, segment_user
from .frames import PointCloud, SensorFrame
from .host import MergedFrame, SplatPolicy, merge
from .sensors import BodyModel, Layout, SensorConfig, sensor_capture, synth_background, synth_body_cloud
from .walker import WalkerScript


@dataclass(frozen=True)
class SensorNode:
    config: SensorConfig
    params: DecimationParams = DecimationParams()
    margin: float = 0.25

    def process(self, world: PointCloud, skeletons: list[Skeleton], ts: int) -> SensorFrame:
        """Capture and decimate one frame.

        Without a reliable skeleton the user cannot be segmented, so the
        frame carries no points.
        """
        raw = sensor_capture(world, skeletons, self.config, ts)
        if not raw.skeletons:
            return SensorFrame(raw.sensor_id, ts, PointCloud.empty(with_quality=True), [])
        sk = raw.skeletons[0]
        user = segment_user(raw.cloud, sk, self.margin)
        return SensorFrame(raw.sensor_id, ts, decimate(user, sk, self.params), [sk])


def scene_frames(layout: Layout, world: PointCloud, skeletons: list[Skeleton], ts: int,
                 params: DecimationParams = DecimationParams()) -> dict[int, SensorFrame]:
    return {cfg.sensor_id: SensorNode(cfg, params).process(world, skeletons, ts) for cfg in layout}


def through_wire(frames: dict[int, SensorFrame]) -> dict[int, SensorFrame]:
    return {sid: wire.decode(wire.encode(f)) for sid, f in frames.items()}


@dataclass
class SyntheticCapture:
    """Deterministic multi-sensor capture of a scripted subject."""

    layout: Layout
    script: WalkerScript
    model: BodyModel = BodyModel()
    params: DecimationParams = DecimationParams()
    seed: int = 0
    fps: float = 30.0
    targets: object = None
    background: int = 0  # floor clutter points, removed again by segmentation

    def skeleton(self, k: int) -> Skeleton:
        return self.script.skeleton_at(k / self.fps, self.targets)

    def frames(self, k: int) -> dict[int, SensorFrame]:
        """Sensor frames for capture index ``k`` (timestamp ``k / fps``)."""
        ts = int(round(k * 1e6 / self.fps))
        sk = self.skeleton(k).replace(timestamp_us=ts)
        cloud = synth_body_cloud(sk, self.model, seed=self.seed * 1_000_003 + k)
        if self.background:
            clutter = synth_background(self.background, seed=self.seed * 1_000_003 + k + 500_000)
            cloud = PointCloud.concat([cloud, clutter])
        return scene_frames(self.layout, cloud, [sk], ts, self.params)

    def iter_frames(self, n: int) -> Iterator[dict[int, SensorFrame]]:
        for k in range(n):
            yield self.frames(k)

    def merged(self, k: int, policy: SplatPolicy | None = None) -> MergedFrame:
        policy = policy or SplatPolicy(stride=self.params.low_stride)
        received = through_wire(self.frames(k))
        return merge(received, self.layout.poses, policy, frame_index=k, deadline=k / self.fps)
