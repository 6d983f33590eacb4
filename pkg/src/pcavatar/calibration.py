"""Extrinsic calibration: rigid alignment of corresponded 3D points."""

from __future__ import annotations

from collections.abc import Mapping, Sequence

import numpy as np

from .avatar import RigidPose, Skeleton, TrackingState


class Degenerate(ValueError):
    pass


class InsufficientOverlap(ValueError):
    def __init__(self, sensor_id: int, detail: str = ""):
        super().__init__(f"sensor {sensor_id}: insufficient overlap with reference {detail}".rstrip())
        self.sensor_id = sensor_id


def estimate_pose(source: np.ndarray, target: np.ndarray, collinear_tol: float = 1e-9) -> tuple[RigidPose, float]:
    """Least-squares rotation and translation taking ``source`` onto ``target``.

    Closed form via the SVD of the cross-covariance; a reflection is turned
    into a proper rotation by flipping the weakest singular direction.
    Returns the pose and the per-coordinate RMS residual.
    """
    src = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if len(src) != len(dst):
        raise ValueError("source and target differ in length")
    if len(src) < 3:
        raise Degenerate(f"need at least 3 correspondences, got {len(src)}")
    if not (np.isfinite(src).all() and np.isfinite(dst).all()):
        raise ValueError("non-finite correspondence")

    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    cs, cd = src - mu_s, dst - mu_d
    spread = np.linalg.svd(cs, compute_uv=False)
    if spread[0] == 0.0 or spread[1] <= collinear_tol * spread[0]:
        raise Degenerate("source points are collinear")

    u, _, vt = np.linalg.svd(cs.T @ cd)
    d = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    # clean up rounding so the pose passes strict orthonormality checks
    uu, _, vv = np.linalg.svd(rot)
    rot = uu @ vv
    t = mu_d - rot @ mu_s
    residual = src @ rot.T + t - dst
    rmse = float(np.sqrt(np.mean(residual**2)))
    return RigidPose(rot, t), rmse


def match_joints(observed: Sequence[Skeleton], reference: Sequence[Skeleton],
                 window_us: int = 10_000) -> tuple[np.ndarray, np.ndarray]:
    """Pair identical Tracked joints from skeletons captured within ``window_us``.

    Each observed skeleton is matched to the nearest-in-time reference
    skeleton inside the window.
    """
    src, dst = [], []
    if not reference:
        return np.zeros((0, 3)), np.zeros((0, 3))
    ref_ts = np.array([r.timestamp_us for r in reference])
    for sk in observed:
        i = int(np.argmin(np.abs(ref_ts - sk.timestamp_us)))
        if abs(int(ref_ts[i]) - sk.timestamp_us) > window_us:
            continue
        ref = reference[i]
        both = (sk.states == TrackingState.TRACKED) & (ref.states == TrackingState.TRACKED)
        src.append(sk.positions[both])
        dst.append(ref.positions[both])
    if not src:
        return np.zeros((0, 3)), np.zeros((0, 3))
    return np.concatenate(src), np.concatenate(dst)


def calibrate_from_skeletons(
    observations: Mapping[int, Sequence[Skeleton]],
    reference_sensor: int,
    reference_pose: RigidPose | None = None,
    window_us: int = 10_000,
) -> tuple[dict[int, RigidPose], dict[int, float]]:
    """Pose of every sensor, expressed through the reference sensor.

    ``reference_pose`` places the reference sensor in the world (identity
    by default, making the reference frame the world frame).
    """
    if reference_sensor not in observations:
        raise KeyError(f"reference sensor {reference_sensor} has no observations")
    ref_pose = reference_pose or RigidPose.identity()
    reference = observations[reference_sensor]
    poses = {reference_sensor: ref_pose}
    rmse = {reference_sensor: 0.0}
    for sid in sorted(observations):
        if sid == reference_sensor:
            continue
        src, dst = match_joints(observations[sid], reference, window_us)
        if len(src) < 3:
            raise InsufficientOverlap(sid, f"({len(src)} shared tracked joints)")
        try:
            rel, err = estimate_pose(src, dst)
        except Degenerate as exc:
            raise InsufficientOverlap(sid, f"({exc})") from exc
        poses[sid] = ref_pose.compose(rel)
        rmse[sid] = err
    return poses, rmse
