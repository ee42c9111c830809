import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm, logm
from scipy.spatial.transform import Rotation as SciRotation

from graspid.lie import (DegenerateTimestampError, Pose, Rotation, TimedPose, Twist, body_twist,
                         exp_pose, exp_rotation, hat, log_pose, log_rotation, relative_pose,
                         retract_pose, transport_twist, vee, window_kinematics)

from conftest import random_rotvecs

finite = st.floats(-3.0, 3.0, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


def _twist_matrix(xi):
    out = np.zeros((4, 4))
    out[:3, :3] = hat(xi[:3])
    out[:3, 3] = xi[3:]
    return out


def _random_pose(rng):
    return Pose(exp_rotation(random_rotvecs(rng, 1)[0]), rng.normal(size=3))


def test_log_identity():
    assert np.array_equal(log_rotation(Rotation.identity()), np.zeros(3))


def test_log_quarter_turn_about_z():
    r = Rotation(np.array([np.cos(np.pi / 4), 0.0, 0.0, np.sin(np.pi / 4)]))
    np.testing.assert_allclose(log_rotation(r), [0.0, 0.0, np.pi / 2], atol=1e-15)


def test_exp_zero_and_half_turn():
    assert exp_rotation(np.zeros(3)) == Rotation.identity()
    q = exp_rotation([0.0, 0.0, np.pi]).q
    np.testing.assert_allclose(np.abs(q), [0.0, 0.0, 0.0, 1.0], atol=1e-15)


def test_exp_small_angle_taylor():
    phi = np.array([3.0, -4.0, 12.0]) / 13.0 * 1e-10
    q = exp_rotation(phi).q
    taylor = np.concatenate([[1.0], 0.5 * phi])
    np.testing.assert_allclose(q, taylor, rtol=0, atol=1e-15)


def test_exp_log_roundtrip_random():
    rng = np.random.default_rng(0)
    phis = random_rotvecs(rng, 1000)
    worst = 0.0
    for phi in phis:
        r = exp_rotation(phi)
        back = exp_rotation(log_rotation(r))
        # quaternion composition oracle: r^-1 * back must be the identity
        err = (r.inverse() * back).q
        worst = max(worst, np.linalg.norm(err[1:]) * 2)
        worst = max(worst, np.linalg.norm(log_rotation(r) - phi))
    assert worst < 1e-9


def test_exp_matches_scipy():
    rng = np.random.default_rng(1)
    for phi in random_rotvecs(rng, 50):
        np.testing.assert_allclose(exp_rotation(phi).matrix(),
                                   SciRotation.from_rotvec(phi).as_matrix(), atol=1e-13)


def test_exp_rejects_nonfinite():
    with pytest.raises(ValueError):
        exp_rotation([np.nan, 0.0, 0.0])


@settings(max_examples=200, deadline=None)
@given(vec3)
def test_so3_roundtrip_property(phi):
    if np.linalg.norm(phi) >= np.pi - 1e-6:
        phi = phi / np.linalg.norm(phi) * 3.0
    np.testing.assert_allclose(log_rotation(exp_rotation(phi)), phi, atol=1e-9)


def test_hat_vee_inverse():
    v = np.array([0.3, -1.2, 2.0])
    assert np.array_equal(vee(hat(v)), v)
    np.testing.assert_allclose(hat(v) @ np.array([1.0, 2.0, 3.0]),
                               np.cross(v, [1.0, 2.0, 3.0]))


def test_relative_pose_cases():
    rng = np.random.default_rng(2)
    a = _random_pose(rng)
    rel = relative_pose(a, a)
    np.testing.assert_allclose(rel.matrix(), np.eye(4), atol=1e-12)
    b = _random_pose(rng)
    np.testing.assert_allclose(relative_pose(Pose.identity(), b).matrix(), b.matrix(),
                               atol=1e-15)
    for _ in range(100):
        a, b = _random_pose(rng), _random_pose(rng)
        np.testing.assert_allclose((a * relative_pose(a, b)).matrix(), b.matrix(), atol=1e-9)


def test_se3_exp_log_against_matrix_exponential():
    rng = np.random.default_rng(3)
    for _ in range(50):
        xi = np.concatenate([random_rotvecs(rng, 1, 2.5)[0], rng.normal(size=3)])
        np.testing.assert_allclose(exp_pose(xi).matrix(), expm(_twist_matrix(xi)), atol=1e-10)
        np.testing.assert_allclose(log_pose(exp_pose(xi)), xi, atol=1e-9)


def test_body_twist_pure_translation():
    a = TimedPose(Pose.identity(), 0.0)
    b = TimedPose(Pose(Rotation.identity(), [0.01, 0.0, 0.0]), 0.1)
    tw = body_twist(a, b)
    np.testing.assert_allclose(tw.angular, 0.0, atol=1e-15)
    np.testing.assert_allclose(tw.linear, [0.1, 0.0, 0.0], atol=1e-14)


def test_body_twist_pure_rotation():
    a = TimedPose(Pose.identity(), 0.0)
    b = TimedPose(Pose(exp_rotation([0.0, 0.0, 0.05]), np.zeros(3)), 0.05)
    tw = body_twist(a, b)
    np.testing.assert_allclose(tw.angular, [0.0, 0.0, 1.0], atol=1e-13)
    np.testing.assert_allclose(tw.linear, 0.0, atol=1e-15)


def test_body_twist_screw_against_matrix_log():
    rng = np.random.default_rng(4)
    for _ in range(20):
        a, b = _random_pose(rng), _random_pose(rng)
        dt = 0.02
        tw = body_twist(TimedPose(a, 1.0), TimedPose(b, 1.0 + dt))
        rel = np.linalg.inv(a.matrix()) @ b.matrix()
        lg = np.real(logm(rel))
        oracle = np.concatenate([vee(lg[:3, :3]), lg[:3, 3]]) / dt
        np.testing.assert_allclose(tw.vector(), oracle, atol=1e-8 / dt)


def test_body_twist_rejects_bad_stamps():
    a = TimedPose(Pose.identity(), 1.0)
    with pytest.raises(DegenerateTimestampError):
        body_twist(a, TimedPose(Pose.identity(), 1.0))


def test_transport_cases():
    tw = Twist([0.0, 1.0, 0.0], [0.5, 0.0, 0.0])
    same = transport_twist(tw, np.zeros(3), 0.01)
    assert np.array_equal(same.vector(), tw.vector())
    out = transport_twist(tw, [0.0, 0.0, 1.0], 0.01)
    np.testing.assert_allclose(out.angular, [-0.01, 1.0, 0.0], atol=1e-15)
    rng = np.random.default_rng(5)
    for _ in range(100):
        xi, w, dt = rng.normal(size=6), rng.normal(size=3), rng.uniform(1e-3, 0.1)
        out = transport_twist(Twist.from_vector(xi), w, dt).vector()
        oracle = np.concatenate([xi[:3] + dt * np.cross(w, xi[:3]),
                                 xi[3:] + dt * np.cross(w, xi[3:])])
        np.testing.assert_allclose(out, oracle, atol=1e-12)


def _timed(rot, trans, t):
    return TimedPose(Pose(rot, trans), t)


def _constant_twist_window(rng, xi, dt=0.01):
    start = _random_pose(rng)
    poses = [start * exp_pose(xi * k * dt) for k in range(3)]
    return window_kinematics(*(TimedPose(p, k * dt) for k, p in enumerate(poses)))


def test_constant_twist_gives_zero_acceleration():
    # screws with the linear part along the axis (and pure spins/translations)
    rng = np.random.default_rng(6)
    for _ in range(20):
        w = rng.normal(size=3)
        xi = np.concatenate([w, rng.normal() * w])
        k = _constant_twist_window(rng, xi)
        assert np.abs(k.angular_accel).max() < 1e-6
        assert np.abs(k.linear_accel).max() < 1e-6
    k = _constant_twist_window(rng, np.concatenate([np.zeros(3), rng.normal(size=3)]))
    assert np.abs(k.linear_accel).max() < 1e-6


def test_constant_twist_origin_acceleration_is_centripetal():
    # a general constant twist moves the origin on a helix: a = w x v
    rng = np.random.default_rng(7)
    for _ in range(20):
        xi = rng.normal(size=6)
        k = _constant_twist_window(rng, xi)
        assert np.abs(k.angular_accel).max() < 1e-6
        np.testing.assert_allclose(k.linear_accel, np.cross(xi[:3], xi[3:]), atol=1e-6)


def test_free_fall_window():
    g = 9.81
    poses = [_timed(Rotation.identity(), [0.0, 0.0, -0.5 * g * t * t], t)
             for t in (0.0, 0.01, 0.02)]
    k = window_kinematics(*poses)
    np.testing.assert_allclose(k.linear_accel, [0.0, 0.0, -g], atol=1e-6)
    np.testing.assert_allclose(k.angular_accel, 0.0, atol=1e-12)


def test_constant_angular_acceleration_window():
    alpha, dt = 2.0, 0.01
    poses = [_timed(exp_rotation([0.0, 0.0, 0.5 * alpha * t * t]), np.zeros(3), t)
             for t in (0.3, 0.3 + dt, 0.3 + 2 * dt)]
    k = window_kinematics(*poses)
    np.testing.assert_allclose(k.angular_accel, [0.0, 0.0, alpha], atol=10 * dt)


def test_retract_zero_and_first_order():
    rot, trans = retract_pose(np.eye(3), np.zeros(3), np.zeros(6))
    np.testing.assert_allclose(rot, np.eye(3))
    np.testing.assert_allclose(trans, 0.0)
    eps = 1e-5
    rot, _ = retract_pose(np.eye(3), np.zeros(3), np.array([0.0, 0.0, eps, 0.0, 0.0, 0.0]))
    expected = np.eye(3) + hat([0.0, 0.0, eps])
    assert np.abs(rot - expected).max() < 10 * eps ** 2
