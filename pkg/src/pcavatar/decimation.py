"""User segmentation and joint-priority decimation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .avatar import JointId, Skeleton, bone_segments, body_height
from .frames import PointCloud
from .geometry import min_point_distance, nearest_segment

J = JointId

HANDS = frozenset({J.HAND_LEFT, J.HAND_RIGHT, J.WRIST_LEFT, J.WRIST_RIGHT,
                   J.HAND_TIP_LEFT, J.HAND_TIP_RIGHT})


class MissingSkeleton(ValueError):
    pass


class NoRelevantJoints(ValueError):
    pass


@dataclass(frozen=True)
class DecimationParams:
    relevant_joints: frozenset[JointId] = HANDS
    threshold_fraction: float = 0.15
    threshold: float | None = None  # meters; overrides the body-size rule
    low_stride: int = 4
    joint_thresholds: Mapping[JointId, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.relevant_joints:
            raise ValueError("relevant_joints must not be empty")
        if self.low_stride < 1:
            raise ValueError("low_stride must be >= 1")
        if self.threshold is not None and not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if not self.threshold_fraction > 0:
            raise ValueError("threshold_fraction must be positive")

    def resolve_threshold(self, skeleton: Skeleton) -> float:
        if self.threshold is not None:
            return self.threshold
        return self.threshold_fraction * body_height(skeleton)


def segment_user(cloud: PointCloud, skeleton: Skeleton | None, margin: float = 0.25) -> PointCloud:
    """Keep points within ``margin`` of any bone segment, in input order."""
    if not margin > 0:
        raise ValueError("margin must be positive")
    if skeleton is None:
        raise MissingSkeleton("no skeleton to segment against")
    seg_a, seg_b, edges = bone_segments(skeleton)
    if not edges:
        raise MissingSkeleton("skeleton has no usable bones")
    dist, _ = nearest_segment(cloud.positions, seg_a, seg_b)
    return cloud.subset(np.flatnonzero(dist <= margin))


def high_quality_mask(positions: np.ndarray, skeleton: Skeleton, params: DecimationParams) -> np.ndarray:
    """True where a point is strictly closer than the threshold to a relevant joint."""
    joints = [j for j in sorted(params.relevant_joints) if skeleton.is_usable(j)]
    if not joints:
        raise NoRelevantJoints("no relevant joint is tracked")
    t = params.resolve_threshold(skeleton)
    if not params.joint_thresholds:
        return min_point_distance(positions, skeleton.positions[joints]) < t
    mask = np.zeros(len(positions), dtype=bool)
    for j in joints:
        tj = params.joint_thresholds.get(j, t)
        mask |= np.linalg.norm(positions - skeleton.positions[j], axis=1) < tj
    return mask


def classify(point, skeleton: Skeleton, params: DecimationParams) -> bool:
    """``True`` for a high-quality point, ``False`` for low."""
    return bool(high_quality_mask(np.asarray(point, dtype=np.float64).reshape(1, 3), skeleton, params)[0])


def decimate(cloud: PointCloud, skeleton: Skeleton, params: DecimationParams = DecimationParams()) -> PointCloud:
    high = high_quality_mask(cloud.positions, skeleton, params)
    low_idx = np.flatnonzero(~high)
    keep = high.copy()
    keep[low_idx[::params.low_stride]] = True
    out = cloud.subset(np.flatnonzero(keep))
    out.quality = high[keep]
    return out
