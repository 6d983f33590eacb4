import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcavatar.avatar import BONES, JointId, TrackingState, body_height
from pcavatar.decimation import (HANDS, DecimationParams, MissingSkeleton, NoRelevantJoints, classify, decimate,
                                 high_quality_mask, segment_user)
from pcavatar.frames import PointCloud
from pcavatar.walker import walker

J = JointId


def cloud_of(points) -> PointCloud:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return PointCloud(pts, np.arange(len(pts) * 3).reshape(-1, 3) % 256)


def brute_min_joint_distance(p, sk, joints):
    return min(math.dist(p, sk.positions[j]) for j in joints if sk.is_usable(j))


def brute_bone_distance(p, sk):
    best = math.inf
    for a, b in BONES:
        if not (sk.is_usable(a) and sk.is_usable(b)):
            continue
        pa, pb = sk.positions[a], sk.positions[b]
        ab = pb - pa
        s = 0.0 if not ab.any() else min(1.0, max(0.0, float((p - pa) @ ab / (ab @ ab))))
        best = min(best, math.dist(p, pa + s * ab))
    return best


def test_default_params(standing):
    p = DecimationParams()
    assert J.HEAD not in p.relevant_joints and p.relevant_joints == HANDS
    assert p.resolve_threshold(standing) == pytest.approx(0.15 * body_height(standing))
    with pytest.raises(ValueError):
        DecimationParams(low_stride=0)
    with pytest.raises(ValueError):
        DecimationParams(relevant_joints=frozenset())


def test_classify_examples(standing):
    params = DecimationParams(threshold=0.1)
    hand = standing.positions[J.HAND_RIGHT]
    assert classify(hand, standing, params) is True
    # exactly at the threshold, along an axis so the distance is exact
    far_from_others = hand + np.array([0.0, 0.0, 0.1])
    d_other = min(np.linalg.norm(far_from_others - standing.positions[j]) for j in HANDS if j != J.HAND_RIGHT)
    assert d_other >= 0.1
    assert classify(far_from_others, standing, params) is False


def test_classify_needs_relevant_joint(standing):
    states = standing.states.copy()
    for j in HANDS:
        states[j] = TrackingState.NOT_TRACKED
    with pytest.raises(NoRelevantJoints):
        classify((0, 1, 0), standing.replace(states=states), DecimationParams())


def test_classify_matches_oracle(rng, standing):
    params = DecimationParams()
    t = params.resolve_threshold(standing)
    pts = standing.positions[J.SPINE_MID] + rng.uniform(-1, 1, (1000, 3))
    mask = high_quality_mask(pts, standing, params)
    oracle = np.array([brute_min_joint_distance(p, standing, params.relevant_joints) < t for p in pts])
    assert np.array_equal(mask, oracle)
    assert 0 < mask.sum() < len(pts)


def test_decimate_examples(standing):
    params = DecimationParams(threshold=0.05, low_stride=4)
    far = [[10.0 + i, 0, 0] for i in range(8)]
    out = decimate(cloud_of(far), standing, params)
    assert np.array_equal(out.positions[:, 0], [10.0, 14.0])
    assert not out.quality.any()

    out = decimate(cloud_of(far), standing, DecimationParams(threshold=0.05, low_stride=1))
    assert len(out) == 8

    near = standing.positions[J.HAND_LEFT] + np.linspace(0, 0.01, 10)[:, None]
    out = decimate(cloud_of(near), standing, params)
    assert len(out) == 10 and out.quality.all()


def test_decimate_laws_random(rng):
    for i in range(100):
        sk = walker(rng.uniform(0, 3), [[-1, 0, 0], [1, 0, 1]], 1.0, height=rng.uniform(1.5, 1.95))
        k = int(rng.integers(1, 9))
        params = DecimationParams(threshold_fraction=rng.uniform(0.05, 0.3), low_stride=k)
        pts = sk.positions[J.SPINE_MID] + rng.uniform(-1.2, 1.2, (int(rng.integers(0, 400)), 3))
        cloud = cloud_of(pts)
        out = decimate(cloud, sk, params)
        high = high_quality_mask(pts, sk, params)
        # High totality, Low stride count, order and subset
        assert out.quality.sum() == high.sum()
        assert (~out.quality).sum() == math.ceil((~high).sum() / k)
        assert np.array_equal(out.positions[out.quality], pts[high])
        keep = np.zeros(len(pts), bool)
        keep[high] = True
        keep[np.flatnonzero(~high)[::k]] = True
        assert np.array_equal(out.positions, pts[keep])


def test_threshold_monotonicity(rng, standing):
    pts = standing.positions[J.SPINE_MID] + rng.uniform(-1, 1, (500, 3))
    prev = np.zeros(len(pts), bool)
    for t in np.linspace(0.01, 0.6, 15):
        m = high_quality_mask(pts, standing, DecimationParams(threshold=t))
        assert not (prev & ~m).any()
        prev = m


def test_per_joint_thresholds(standing):
    params = DecimationParams(threshold=0.01, joint_thresholds={J.HAND_RIGHT: 0.2})
    p = standing.positions[J.HAND_RIGHT] + (0, 0, 0.1)
    assert classify(p, standing, params)


def test_segment_user_examples(standing):
    joint = standing.positions[J.ELBOW_LEFT]
    far = standing.positions[J.SPINE_MID] + (3.0, 3.0, 3.0)
    out = segment_user(cloud_of([joint, far]), standing, 0.25)
    assert np.array_equal(out.positions, [joint])
    with pytest.raises(MissingSkeleton):
        segment_user(cloud_of([joint]), None)


def test_segment_user_matches_oracle_and_idempotent(rng, standing):
    pts = standing.positions[J.SPINE_MID] + rng.uniform(-1.5, 1.5, (800, 3))
    out = segment_user(cloud_of(pts), standing, 0.25)
    oracle = np.array([brute_bone_distance(p, standing) <= 0.25 for p in pts])
    assert np.array_equal(out.positions, pts[oracle])
    assert segment_user(out, standing, 0.25) == out


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 10))
def test_decimate_never_invents_points(seed, k):
    rng = np.random.default_rng(seed)
    sk = walker(rng.uniform(0, 2), [[0, 0, 0], [1, 0, 0]], 1.0)
    pts = rng.uniform(-2, 2, (int(rng.integers(0, 100)), 3)) + (0, 1, 0)
    out = decimate(cloud_of(pts), sk, DecimationParams(low_stride=k))
    assert all(any(np.array_equal(p, q) for q in pts) for p in out.positions)
