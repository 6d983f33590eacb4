import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_pose
from pcavatar.avatar import (BONES, N_JOINTS, CameraOffsets, Cylinder, JointId, MissingJoint, Perspective,
                             RigidPose, Skeleton, Sphere, TrackingState, abstract_avatar, body_height,
                             camera_pose, look_rotation, transform)

J = JointId


def skeleton_with(points: dict, state=TrackingState.TRACKED) -> Skeleton:
    pos = np.zeros((N_JOINTS, 3))
    states = np.zeros(N_JOINTS)
    for j, p in points.items():
        pos[j] = p
        states[j] = state
    return Skeleton(pos, np.tile([1.0, 0, 0, 0], (N_JOINTS, 1)), states)


def test_joint_codes_dense_and_stable():
    assert [int(j) for j in JointId] == list(range(25))
    assert J.SPINE_BASE == 0 and J.HEAD == 3 and J.THUMB_RIGHT == 24


def test_bone_graph_is_spanning_tree():
    assert len(BONES) == 24
    parent = list(range(N_JOINTS))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in BONES:
        ra, rb = find(a), find(b)
        assert ra != rb, f"cycle through {a.name}-{b.name}"
        parent[ra] = rb
    assert len({find(j) for j in range(N_JOINTS)}) == 1
    assert BONES[0][0] == J.SPINE_BASE


def test_body_height_example():
    sk = skeleton_with({J.HEAD: (0, 1.70, 0), J.FOOT_LEFT: (0, 0.05, 0)})
    assert body_height(sk, 0.10) == pytest.approx(1.75, abs=1e-12)


def test_body_height_degenerate_and_missing():
    sk = skeleton_with({J.HEAD: (0, 0.5, 0), J.FOOT_RIGHT: (0, 0.5, 0)})
    assert body_height(sk, 0.0) == 0.0
    with pytest.raises(MissingJoint):
        body_height(skeleton_with({J.HEAD: (0, 1.7, 0)}))
    with pytest.raises(MissingJoint):
        body_height(skeleton_with({J.FOOT_LEFT: (0, 0, 0)}))


def test_body_height_uses_lower_foot(standing):
    lifted = standing.positions.copy()
    lifted[J.FOOT_RIGHT] += (0, 0.3, 0)
    sk = standing.replace(positions=lifted)
    assert body_height(sk) == pytest.approx(body_height(standing), abs=1e-12)


def test_abstract_avatar_counts(standing):
    prims = abstract_avatar(standing)
    assert sum(isinstance(p, Sphere) for p in prims) == 25
    assert sum(isinstance(p, Cylinder) for p in prims) == 24
    # spheres first in joint-code order
    assert np.array_equal(prims[3].center, standing.positions[J.HEAD])


def test_abstract_avatar_single_joint_and_bad_radius(standing):
    single = skeleton_with({J.HEAD: (0, 1.7, 0)})
    prims = abstract_avatar(single)
    assert len(prims) == 1 and isinstance(prims[0], Sphere)
    with pytest.raises(ValueError):
        abstract_avatar(standing, joint_radius=0.0)
    assert abstract_avatar(skeleton_with({})) == []


def test_abstract_avatar_count_law(rng, standing):
    for _ in range(50):
        states = rng.integers(0, 3, N_JOINTS)
        sk = standing.replace(states=states)
        usable = states != TrackingState.NOT_TRACKED
        edges = sum(usable[a] and usable[b] for a, b in BONES)
        assert len(abstract_avatar(sk)) == usable.sum() + edges


def test_transform_examples():
    assert np.allclose(transform(RigidPose.identity(), [1, 2, 3]), [1, 2, 3])
    rz = np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 1]])
    assert np.allclose(transform(RigidPose(rz, np.zeros(3)), [1, 0, 0]), [0, 1, 0], atol=1e-15)


def test_rigid_pose_rejects_improper():
    with pytest.raises(ValueError):
        RigidPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        RigidPose(np.eye(3) * 1.001, np.zeros(3))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_transform_is_isometry(seed):
    rng = np.random.default_rng(seed)
    pose = random_pose(rng)
    p, q = rng.uniform(-10, 10, (2, 3))
    assert abs(np.linalg.norm(p - q) - np.linalg.norm(transform(pose, p) - transform(pose, q))) < 1e-9


def test_pose_inverse_and_compose(rng):
    a, b = random_pose(rng), random_pose(rng)
    p = rng.normal(size=3)
    assert np.allclose(a.inverse().apply(a.apply(p)), p, atol=1e-12)
    assert np.allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-12)
    assert np.allclose(RigidPose.from_quat(a.quat, a.translation).rotation, a.rotation, atol=1e-12)


def test_body_height_rigid_invariance(rng, standing):
    h = body_height(standing)
    for _ in range(20):
        assert abs(body_height(standing.transformed(random_pose(rng))) - h) < 1e-9


def test_camera_first_person():
    sk = skeleton_with({J.HEAD: (0, 1.7, 0)})
    pose = camera_pose(sk, Perspective.FIRST_PERSON)
    assert np.allclose(pose.translation, (0, 1.7, 0))


def test_camera_third_person(standing):
    head = standing.positions[J.HEAD].copy()
    # rebuild around a head at (0, 1.7, 0) facing +x
    sk = standing.replace(positions=standing.positions - head + (0, 1.7, 0))
    pose = camera_pose(sk, Perspective.THIRD_PERSON)
    assert np.allclose(pose.translation, (-1.0, 1.95, 0.0), atol=1e-9)
    # camera looks at the head: +z axis of the camera points at it
    fwd = pose.rotation[:, 2]
    to_head = (0, 1.7, 0) - pose.translation
    assert np.allclose(fwd, to_head / np.linalg.norm(to_head), atol=1e-9)
    flat = camera_pose(sk, Perspective.THIRD_PERSON, CameraOffsets(up=0.0, back=0.0))
    assert np.allclose(flat.translation, (0, 1.7, 0))


def test_camera_needs_head(standing):
    states = standing.states.copy()
    states[J.HEAD] = TrackingState.NOT_TRACKED
    with pytest.raises(MissingJoint):
        camera_pose(standing.replace(states=states), Perspective.FIRST_PERSON)


def test_look_rotation_is_proper():
    r = look_rotation(np.array([1.0, 0.2, -0.5]))
    assert np.isclose(np.linalg.det(r), 1.0) and np.allclose(r.T @ r, np.eye(3))
