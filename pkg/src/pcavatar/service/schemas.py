"""Request and response models for the host service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, field_validator

from ..avatar import RigidPose
from ..host import MergedFrame
from ..sensors import Layout, SensorConfig


class SensorModel(BaseModel):
    sensor_id: int = Field(ge=0, le=254)
    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float] = Field(description="unit quaternion w x y z")
    h_fov: float = 70.0
    v_fov: float = 60.0
    min_range: float = 0.4
    max_range: float = 4.5
    skeleton_range: float = 2.5

    def to_config(self) -> SensorConfig:
        return SensorConfig(self.sensor_id, RigidPose.from_quat(self.orientation, self.position),
                            self.h_fov, self.v_fov, self.min_range, self.max_range, self.skeleton_range)

    @classmethod
    def from_config(cls, s: SensorConfig) -> SensorModel:
        return cls(sensor_id=s.sensor_id, position=tuple(s.pose.translation), orientation=tuple(s.pose.quat),
                   h_fov=s.h_fov, v_fov=s.v_fov, min_range=s.min_range, max_range=s.max_range,
                   skeleton_range=s.skeleton_range)


class LayoutModel(BaseModel):
    sensors: list[SensorModel]

    @field_validator("sensors")
    @classmethod
    def unique_ids(cls, v: list[SensorModel]) -> list[SensorModel]:
        ids = [s.sensor_id for s in v]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate sensor_id")
        return v

    def to_layout(self) -> Layout:
        return Layout(sorted((s.to_config() for s in self.sensors), key=lambda s: s.sensor_id))

    @classmethod
    def from_layout(cls, layout: Layout) -> LayoutModel:
        return cls(sensors=[SensorModel.from_config(s) for s in layout])


class Health(BaseModel):
    status: str = "ok"


class Status(BaseModel):
    fps: float
    ticks: int
    listen: str | None
    sensors: list[int]
    connected: list[int]
    stale: list[int]
    bytes_in: int
    events: int


class FrameAck(BaseModel):
    sensor_id: int
    timestamp_us: int
    points: int
    skeletons: int


class SplatModel(BaseModel):
    center: tuple[float, float, float]
    radius: float
    color: tuple[int, int, int]


class MergedSummary(BaseModel):
    frame_index: int
    deadline: float
    splat_count: int
    counts: dict[int, int]
    staleness_ms: dict[int, float]
    stale: list[int]
    skeleton_sensors: list[int]
    splats: list[SplatModel] | None = None

    @classmethod
    def from_frame(cls, frame: MergedFrame, include_splats: bool = False) -> MergedSummary:
        splats = None
        if include_splats:
            s = frame.splats
            splats = [SplatModel(center=tuple(c), radius=float(r), color=tuple(int(v) for v in col))
                      for c, r, col in zip(s.centers.tolist(), s.radii, s.colors)]
        return cls(frame_index=frame.frame_index, deadline=frame.deadline, splat_count=len(frame.splats),
                   counts=dict(frame.counts), staleness_ms=dict(frame.staleness_ms), stale=sorted(frame.stale),
                   skeleton_sensors=[sid for sid, _ in frame.skeletons], splats=splats)


class EventModel(BaseModel):
    time: float
    sensor_id: int | None
    kind: str
    detail: str


class FrameSize(BaseModel):
    joints: int
    points: int
    bytes: int


class CalibrateRequest(BaseModel):
    recordings: list[str] = Field(min_length=1, description="recording files or directories on the host")
    reference: int = 0
    window_us: int = Field(10_000, gt=0)
    apply: bool = Field(True, description="install the recovered poses in the running host")


class CalibrateResponse(BaseModel):
    layout: LayoutModel
    rmse: dict[int, float]


class ScenarioRequest(BaseModel):
    task: Literal[1, 2, 3, 4, "all"] = "all"
    walker: str = "perfect"
    seed: int = 0
    config: str | None = None


class TaskResultModel(BaseModel):
    task_id: int
    elapsed: float
    collisions: int
    balls_caught: int | None
    hits: dict[str, int]
    balls: list[str]


class ScenarioResponse(BaseModel):
    results: list[TaskResultModel]
    log: str
