"""Point-cloud and sensor-frame containers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .avatar import Skeleton


@dataclass(eq=False)
class PointCloud:
    """Column-wise colored point set.

    ``quality`` is ``None`` for raw captured points and a boolean array
    (True = high quality) once the cloud has been decimated.
    """

    positions: np.ndarray
    colors: np.ndarray
    quality: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if len(self.colors) != len(self.positions):
            raise ValueError("positions and colors differ in length")
        if self.quality is not None:
            self.quality = np.asarray(self.quality, dtype=bool).reshape(-1)
            if len(self.quality) != len(self.positions):
                raise ValueError("quality flags differ in length from positions")

    @classmethod
    def empty(cls, with_quality: bool = False) -> PointCloud:
        return cls(np.zeros((0, 3)), np.zeros((0, 3), np.uint8), np.zeros(0, bool) if with_quality else None)

    def __len__(self) -> int:
        return len(self.positions)

    def subset(self, index: np.ndarray) -> PointCloud:
        q = None if self.quality is None else self.quality[index]
        return PointCloud(self.positions[index], self.colors[index], q)

    @classmethod
    def concat(cls, clouds: list[PointCloud]) -> PointCloud:
        if not clouds:
            return cls.empty()
        q = None
        if all(c.quality is not None for c in clouds):
            q = np.concatenate([c.quality for c in clouds])
        return cls(np.concatenate([c.positions for c in clouds]), np.concatenate([c.colors for c in clouds]), q)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        if (self.quality is None) != (other.quality is None):
            return False
        return (np.array_equal(self.positions, other.positions)
                and np.array_equal(self.colors, other.colors)
                and (self.quality is None or np.array_equal(self.quality, other.quality)))


@dataclass(eq=False)
class SensorFrame:
    """Everything one sensor reports at one instant, in its local frame."""

    sensor_id: int
    timestamp_us: int
    cloud: PointCloud = field(default_factory=PointCloud.empty)
    skeletons: list[Skeleton] = field(default_factory=list)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SensorFrame):
            return NotImplemented
        return (self.sensor_id == other.sensor_id
                and self.timestamp_us == other.timestamp_us
                and self.cloud == other.cloud
                and len(self.skeletons) == len(other.skeletons)
                and all(a == b for a, b in zip(self.skeletons, other.skeletons)))

    def __repr__(self) -> str:
        return (f"SensorFrame(sensor_id={self.sensor_id}, timestamp_us={self.timestamp_us}, "
                f"points={len(self.cloud)}, skeletons={len(self.skeletons)})")
