from __future__ import annotations

import numpy as np


def _segment_sq_distance(px, py, pz, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ax, ay, az = a
    abx, aby, abz = b[0] - ax, b[1] - ay, b[2] - az
    apx, apy, apz = px - ax, py - ay, pz - az
    denom = abx * abx + aby * aby + abz * abz
    if denom == 0.0:
        return apx * apx + apy * apy + apz * apz
    s = (apx * abx + apy * aby + apz * abz) / denom
    np.clip(s, 0.0, 1.0, out=s)
    dx, dy, dz = apx - s * abx, apy - s * aby, apz - s * abz
    return dx * dx + dy * dy + dz * dz


def point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each of ``points (N,3)`` to the segment ``a``-``b``."""
    p = np.asarray(points, dtype=np.float64)
    return np.sqrt(_segment_sq_distance(p[:, 0], p[:, 1], p[:, 2], np.asarray(a), np.asarray(b)))


def nearest_segment(points: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimum distance to a set of segments and the index of the closest one.

    Loops over segments (few) and vectorizes over points (many).
    """
    p = np.asarray(points, dtype=np.float64)
    px, py, pz = p[:, 0].copy(), p[:, 1].copy(), p[:, 2].copy()
    best = np.full(len(p), np.inf)
    which = np.full(len(p), -1, dtype=np.intp)
    for i, (a, b) in enumerate(zip(seg_a, seg_b)):
        d2 = _segment_sq_distance(px, py, pz, a, b)
        closer = d2 < best
        best[closer] = d2[closer]
        which[closer] = i
    return np.sqrt(best), which


def min_point_distance(points: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest of a small set of ``targets``."""
    p = np.asarray(points, dtype=np.float64)
    best = np.full(len(p), np.inf)
    px, py, pz = p[:, 0], p[:, 1], p[:, 2]
    for tx, ty, tz in np.asarray(targets, dtype=np.float64).reshape(-1, 3):
        dx, dy, dz = px - tx, py - ty, pz - tz
        np.minimum(best, dx * dx + dy * dy + dz * dz, out=best)
    return np.sqrt(best)
