import numpy as np
import pytest

from conftest import random_frame, random_pose
from pcavatar import wire
from pcavatar.avatar import BONES, JointId, RigidPose
from pcavatar.frames import PointCloud
from pcavatar.geometry import point_segment_distance
from pcavatar.recording import REC_MAGIC, TruncatedFrame, record, replay
from pcavatar.sensors import (BodyModel, SensorConfig, default_layout, load_layout, save_layout, sensor_capture,
                              synth_body_cloud)
from pcavatar.walker import EmptyPath, walker

J = JointId


def on_axis_cloud(ranges) -> PointCloud:
    pts = np.array([[0.0, 0.0, r] for r in ranges])
    return PointCloud(pts, np.zeros((len(pts), 3)))


def test_sensor_config_validation():
    with pytest.raises(ValueError):
        SensorConfig(0, RigidPose.identity(), min_range=3.0)
    with pytest.raises(ValueError):
        SensorConfig(255, RigidPose.identity())
    with pytest.raises(ValueError):
        SensorConfig(0, RigidPose.identity(), h_fov=180)


def test_capture_range_examples():
    cfg = SensorConfig(0, RigidPose.identity())
    frame = sensor_capture(on_axis_cloud([0.3, 1.0, 5.0]), [], cfg, 0)
    assert np.allclose(frame.cloud.positions, [[0, 0, 1.0]])


def test_capture_skeleton_range(standing):
    cfg = SensorConfig(0, RigidPose.identity())
    for dist, seen in ((2.0, True), (3.0, False)):
        # put the spine base on the optical axis at ``dist``
        offset = np.array([0.0, 0.0, dist]) - standing.positions[J.SPINE_BASE]
        sk = standing.replace(positions=standing.positions + offset)
        body = synth_body_cloud(sk, seed=1)
        frame = sensor_capture(body, [sk], cfg, 10)
        assert len(frame.cloud) > 0
        assert bool(frame.skeletons) is seen
        if seen:
            assert frame.skeletons[0].timestamp_us == 10


def test_capture_matches_brute_force(rng):
    for _ in range(20):
        cfg = SensorConfig(1, random_pose(rng, 1.0), h_fov=rng.uniform(30, 120), v_fov=rng.uniform(30, 100))
        world = PointCloud(rng.uniform(-6, 6, (2000, 3)), rng.integers(0, 256, (2000, 3)))
        frame = sensor_capture(world, [], cfg, 0)
        expected = []
        inv = cfg.pose.inverse()
        for p in world.positions:
            x, y, z = inv.apply(p)
            r = np.sqrt(x * x + y * y + z * z)
            ok = (z > 0 and abs(np.degrees(np.arctan2(x, z))) <= cfg.h_fov / 2
                  and abs(np.degrees(np.arctan2(y, z))) <= cfg.v_fov / 2 and cfg.min_range <= r <= cfg.max_range)
            if ok:
                expected.append((x, y, z))
        assert np.allclose(frame.cloud.positions, np.array(expected).reshape(-1, 3), atol=1e-12)


def test_synth_body_deterministic_and_on_capsules(standing):
    model = BodyModel()
    a = synth_body_cloud(standing, model, seed=5)
    assert a == synth_body_cloud(standing, model, seed=5)
    assert a != synth_body_cloud(standing, model, seed=6)
    dist = np.full(len(a), np.inf)
    for bone in BONES:
        d = point_segment_distance(a.positions, standing.positions[bone[0]], standing.positions[bone[1]])
        dist = np.minimum(dist, d - model.radius(bone))
    assert dist.max() <= 1e-9
    assert len(synth_body_cloud(standing, BodyModel(density=0.0))) == 0


def test_walker_examples():
    path = [[0, 0, 0], [10, 0, 0]]
    assert np.allclose(walker(0.0, path, 1.0).positions[J.SPINE_BASE][[0, 2]], [0, 0])
    sk = walker(2.0, path, 1.0)
    assert abs(np.linalg.norm(sk.positions[J.SPINE_BASE][[0, 2]]) - 2.0) < 1e-9
    assert np.allclose(walker(100.0, path, 1.0).positions[J.SPINE_BASE][[0, 2]], [10, 0])
    with pytest.raises(EmptyPath):
        walker(0.0, [[0, 0, 0]], 1.0)
    # deterministic in t
    assert walker(1.234, path, 1.0) == walker(1.234, path, 1.0)


def test_walker_faces_path_tangent():
    sk = walker(0.5, [[0, 0, 0], [0, 0, 5]], 1.0)
    left, right = sk.positions[J.SHOULDER_LEFT], sk.positions[J.SHOULDER_RIGHT]
    across = right - left
    # facing +z means the right shoulder lies toward -x
    assert across[0] < 0 and abs(across[2]) < 1e-9


def test_default_layout_sees_center(standing):
    layout = default_layout()
    assert len(layout) == 5
    seen = [sensor_capture(synth_body_cloud(standing, seed=0), [standing], cfg, 0) for cfg in layout]
    assert any(f.skeletons for f in seen)
    assert all(len(f.cloud) > 0 for f in seen)


def test_layout_file_round_trip(tmp_path, rng):
    layout = default_layout()
    path = tmp_path / "layout.ini"
    save_layout(layout, path, rmse={1: 0.002})
    back = load_layout(path)
    assert [s.sensor_id for s in back] == [0, 1, 2, 3, 4]
    for a, b in zip(layout, back):
        assert np.allclose(a.pose.rotation, b.pose.rotation, atol=1e-12)
        assert np.allclose(a.pose.translation, b.pose.translation, atol=1e-12)
        assert (a.h_fov, a.max_range, a.skeleton_range) == (b.h_fov, b.max_range, b.skeleton_range)
    assert "calibration_rmse = 0.002" in path.read_text()


def test_record_replay_round_trip(tmp_path, rng):
    frames = [random_frame(rng) for _ in range(30)]
    path = tmp_path / "a.pcavrec"
    assert record(frames, path) == 30
    assert path.read_bytes()[:8] == REC_MAGIC
    assert list(replay(path)) == frames
    # byte identical when re-recorded
    path2 = tmp_path / "b.pcavrec"
    record(replay(path), path2)
    assert path.read_bytes() == path2.read_bytes()


def test_replay_errors(tmp_path, rng):
    empty = tmp_path / "empty.pcavrec"
    empty.write_bytes(b"")
    with pytest.raises(wire.BadMagic):
        list(replay(empty))
    v2 = tmp_path / "v2.pcavrec"
    v2.write_bytes(b"PCAVREC2")
    with pytest.raises(wire.VersionMismatch):
        list(replay(v2))

    frames = [random_frame(rng, skeleton=True) for _ in range(3)]
    path = tmp_path / "cut.pcavrec"
    record(frames, path)
    data = path.read_bytes()
    sizes = [4 + len(wire.encode(f)) for f in frames]
    cut_at = 8 + sizes[0] + sizes[1] // 2
    path.write_bytes(data[:cut_at])
    out = []
    with pytest.raises(TruncatedFrame) as exc:
        for f in replay(path):
            out.append(f)
    assert exc.value.index == 1 and out == frames[:1]
