"""
Tests for rigid-transform algebra.

Verifies:
- Small-angle matrix layout and orthonormalization accuracy
- Quaternion conversions and the double cover
- Compose / inverse / apply agree with 4x4 matrix algebra
- Degenerate rotations are rejected
- Euler extraction flags gimbal lock
"""

import math

import numpy as np
import pytest

from app.errors import DegenerateRotation
from app.geom import (
    RigidTransform,
    TwistParams,
    UnitQuaternion,
    euler_xyz,
    exp_so3,
    from_euler_xyz,
    geodesic_angle,
    look_at,
    matrix_to_quaternion,
    orthonormalize,
    quaternion_to_matrix,
    small_angle_transform,
)


def random_transform(rng) -> RigidTransform:
    return RigidTransform(exp_so3(rng.normal(size=3)), rng.normal(size=3))


def test_small_angle_layout():
    x = TwistParams(0.01, 0.02, 0.03, 1.0, 2.0, 3.0)
    m = small_angle_transform(x)
    expected = np.array([
        [1.0, -0.03, 0.02, 1.0],
        [0.03, 1.0, -0.01, 2.0],
        [-0.02, 0.01, 1.0, 3.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    np.testing.assert_array_equal(m, expected)


def test_small_angle_zero_is_identity():
    t = orthonormalize(small_angle_transform(TwistParams.zero()))
    np.testing.assert_array_equal(t.as_matrix(), np.eye(4))


@pytest.mark.parametrize("theta", [1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.2])
def test_orthonormalized_small_angle_close_to_exponential(theta):
    rng = np.random.default_rng(int(theta * 1e6))
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    x = TwistParams.from_vector([*(axis * theta), 0.0, 0.0, 0.0])

    approx = orthonormalize(small_angle_transform(x)).rotation
    exact = exp_so3(axis * theta)
    assert geodesic_angle(approx, exact) <= theta ** 2 / 2


def test_orthonormalize_is_idempotent():
    rng = np.random.default_rng(3)
    t = random_transform(rng)
    again = orthonormalize(t.as_matrix())
    np.testing.assert_allclose(again.as_matrix(), t.as_matrix(), atol=1e-12)


def test_orthonormalize_rejects_reflection_and_singular():
    reflection = np.diag([1.0, 1.0, -1.0, 1.0])
    with pytest.raises(DegenerateRotation):
        orthonormalize(reflection)

    singular = np.eye(4)
    singular[2, 2] = 0.0
    with pytest.raises(DegenerateRotation):
        orthonormalize(singular)

    with pytest.raises(DegenerateRotation):
        orthonormalize(np.full((4, 4), np.nan))


def test_rigid_transform_rejects_non_rotation():
    with pytest.raises(DegenerateRotation):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(DegenerateRotation):
        RigidTransform(2.0 * np.eye(3), np.zeros(3))


def test_compose_matches_matrix_product():
    rng = np.random.default_rng(11)
    a = random_transform(rng)
    b = random_transform(rng)
    np.testing.assert_allclose(a.compose(b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)


def test_inverse_and_apply():
    rng = np.random.default_rng(12)
    t = random_transform(rng)
    np.testing.assert_allclose(t.compose(t.inverse()).as_matrix(), np.eye(4), atol=1e-12)

    points = rng.normal(size=(10, 3))
    np.testing.assert_allclose(t.inverse().apply(t.apply(points)), points, atol=1e-12)
    np.testing.assert_allclose(t.apply(points[0]), t.rotation @ points[0] + t.translation)


def test_quaternion_round_trip_and_double_cover():
    rng = np.random.default_rng(5)
    for _ in range(20):
        rotation = exp_so3(rng.normal(size=3))
        q = matrix_to_quaternion(rotation)
        np.testing.assert_allclose(quaternion_to_matrix(q), rotation, atol=1e-12)

        negated = UnitQuaternion(-q.w, -q.x, -q.y, -q.z)
        assert negated == q
        np.testing.assert_allclose(negated.to_matrix(), rotation, atol=1e-12)


def test_quaternion_normalizes_and_rejects_zero():
    q = UnitQuaternion(2.0, 0.0, 0.0, 0.0)
    assert q.w == 1.0
    with pytest.raises(ValueError):
        UnitQuaternion(0.0, 0.0, 0.0, 0.0)


def test_quaternion_storage_order():
    # 90 degrees about z
    q = UnitQuaternion.from_rotation_vector([0.0, 0.0, math.pi / 2])
    np.testing.assert_allclose(q.as_wxyz(), [math.sqrt(0.5), 0.0, 0.0, math.sqrt(0.5)], atol=1e-12)
    np.testing.assert_allclose(q.as_xyzw(), [0.0, 0.0, math.sqrt(0.5), math.sqrt(0.5)], atol=1e-12)


def test_from_quaternion_keeps_translation():
    q = UnitQuaternion.from_rotation_vector([0.1, -0.2, 0.3])
    t = RigidTransform.from_quaternion(q, [1.0, 2.0, 3.0])
    assert t.quaternion() == q
    np.testing.assert_array_equal(t.translation, [1.0, 2.0, 3.0])


def test_geodesic_angle():
    assert geodesic_angle(np.eye(3), exp_so3([0.0, 0.3, 0.0])) == pytest.approx(0.3, abs=1e-12)
    assert RigidTransform.from_rotation_vector([0.0, 0.0, 0.5]).rotation_angle() == pytest.approx(0.5, abs=1e-12)


def test_euler_round_trip():
    angles = np.array([0.1, -0.4, 1.2])
    recovered, gimbal = euler_xyz(from_euler_xyz(angles))
    np.testing.assert_allclose(recovered, angles, atol=1e-12)
    assert not gimbal


def test_euler_flags_gimbal_lock():
    _, gimbal = euler_xyz(from_euler_xyz([0.3, math.pi / 2, 0.2]))
    assert gimbal


def test_twist_params_validation():
    assert TwistParams.from_vector(range(6)).as_vector().tolist() == [0, 1, 2, 3, 4, 5]
    with pytest.raises(ValueError):
        TwistParams.from_vector([0.0] * 5)
    with pytest.raises(ValueError):
        TwistParams(math.nan)
    assert TwistParams(0.1).small_angle_valid
    assert not TwistParams(0.5).small_angle_valid


def test_look_at_axes():
    pose = look_at([0.0, 0.0, 0.0], [0.0, 0.0, 5.0])
    np.testing.assert_allclose(pose.rotation, np.eye(3), atol=1e-12)

    pose = look_at([1.0, 0.0, 0.0], [1.0, 0.0, -3.0])
    np.testing.assert_allclose(pose.rotation @ [0.0, 0.0, 1.0], [0.0, 0.0, -1.0], atol=1e-12)
    np.testing.assert_allclose(pose.rotation @ [0.0, 1.0, 0.0], [0.0, 1.0, 0.0], atol=1e-12)
