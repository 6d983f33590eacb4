from __future__ import annotations

import numpy as np
import pytest

from pcavatar.avatar import N_JOINTS, RigidPose, Skeleton
from pcavatar.frames import PointCloud, SensorFrame
from pcavatar.walker import walker


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def random_pose(rng: np.random.Generator, scale: float = 3.0) -> RigidPose:
    r = random_rotation(rng)
    # re-orthonormalize so the strict RigidPose check passes
    u, _, vt = np.linalg.svd(r)
    return RigidPose(u @ vt, rng.uniform(-scale, scale, 3))


def random_skeleton(rng: np.random.Generator, ts: int = 0) -> Skeleton:
    """Skeleton with f32-representable fields, as produced by the decoder."""
    pos = rng.uniform(-3, 3, (N_JOINTS, 3)).astype(np.float32).astype(np.float64)
    ori = rng.normal(size=(N_JOINTS, 4))
    ori = (ori / np.linalg.norm(ori, axis=1, keepdims=True)).astype(np.float32).astype(np.float64)
    states = rng.integers(0, 3, N_JOINTS)
    return Skeleton(pos, ori, states, ts)


def random_frame(rng: np.random.Generator, max_points: int = 200, skeleton: bool | None = None) -> SensorFrame:
    n = int(rng.integers(0, max_points + 1))
    ts = int(rng.integers(0, 2**64, dtype=np.uint64))
    pos = rng.uniform(-5, 5, (n, 3)).astype(np.float32).astype(np.float64)
    cloud = PointCloud(pos, rng.integers(0, 256, (n, 3)), rng.random(n) < 0.5)
    if skeleton is None:
        skeleton = bool(rng.random() < 0.7)
    sks = [random_skeleton(rng, ts)] if skeleton else []
    return SensorFrame(int(rng.integers(0, 255)), ts, cloud, sks)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def standing() -> Skeleton:
    """Upright 1.75 m subject at the origin facing +x."""
    return walker(0.0, [[0, 0, 0], [1, 0, 0]], 1.0, height=1.75)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
