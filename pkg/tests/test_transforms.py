import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from grasplab import transforms as tf


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def scipy_quat(q_wxyz):
    # scipy uses xyzw ordering
    w, x, y, z = q_wxyz
    return Rotation.from_quat([x, y, z, w])


def test_identity_round_trips():
    q = tf.IDENTITY_QUAT
    assert np.allclose(tf.quat_to_matrix(q), np.eye(3))
    assert np.allclose(tf.quat_from_matrix(np.eye(3)), q)


def test_matrix_round_trip_matches_scipy(rng):
    for _ in range(200):
        q = tf.random_quaternion(rng)
        R = tf.quat_to_matrix(q)
        assert np.allclose(R, scipy_quat(q).as_matrix(), atol=1e-12)
        q2 = tf.quat_from_matrix(R)
        assert tf.quat_geodesic_distance(q, q2) < 1e-9


def test_rotate_matches_matrix(rng):
    for _ in range(100):
        q = tf.random_quaternion(rng)
        v = rng.normal(size=3)
        assert np.allclose(tf.quat_rotate(q, v), tf.quat_to_matrix(q) @ v, atol=1e-12)


def test_multiply_composes(rng):
    a = tf.random_quaternion(rng)
    b = tf.random_quaternion(rng)
    Rab = tf.quat_to_matrix(tf.quat_multiply(a, b))
    assert np.allclose(Rab, tf.quat_to_matrix(a) @ tf.quat_to_matrix(b), atol=1e-12)


def test_canonical_sign(rng):
    q = tf.random_quaternion(rng)
    assert tf.quat_canonical(-q)[0] >= 0
    assert np.allclose(tf.quat_canonical(-q), q)


def test_rotvec_round_trip(rng):
    for _ in range(100):
        v = rng.normal(size=3) * rng.uniform(0, 2.5)
        q = tf.quat_from_rotvec(v)
        sp = Rotation.from_rotvec(v)
        assert np.allclose(tf.quat_to_matrix(q), sp.as_matrix(), atol=1e-12)
        v2 = tf.quat_to_rotvec(q)
        assert np.allclose(np.asarray(v2), sp.as_rotvec(), atol=1e-9)


def test_geodesic_distance():
    qa = tf.quat_from_axis_angle([0, 0, 1], 0.0)
    qb = tf.quat_from_axis_angle([0, 0, 1], 0.3)
    assert tf.quat_geodesic_distance(qa, qb) == pytest.approx(0.3, abs=1e-12)


def test_angular_velocity_recovers_axis_rate():
    dt = 0.02
    omega = np.array([0.0, 0.0, 2.0])
    q0 = tf.quat_from_axis_angle([0, 1, 0], 0.4)
    q1 = tf.integrate_quat(q0, omega, dt)
    est = tf.quat_angular_velocity(q0, q1, dt)
    assert np.allclose(est, omega, atol=1e-9)


def test_project_rotation_is_orthonormal(rng):
    M = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
    R = tf.project_rotation(M)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


def test_polar_rotation_strips_stretch(rng):
    R = tf.quat_to_matrix(tf.random_quaternion(rng))
    U = np.diag([1.2, 0.9, 1.05])
    assert np.allclose(tf.polar_rotation(R @ U), R, atol=1e-12)


def test_chordal_mean_of_single_rotation(rng):
    R = tf.quat_to_matrix(tf.random_quaternion(rng))
    mean = tf.chordal_mean_rotation(np.stack([R, R, R]))
    assert np.allclose(mean, R, atol=1e-12)


def test_chordal_mean_of_small_perturbations(rng):
    base = tf.quat_to_matrix(tf.random_quaternion(rng))
    rots = []
    for _ in range(50):
        axis = rng.normal(size=3)
        pert = tf.quat_to_matrix(tf.quat_from_axis_angle(axis, rng.normal(0, 0.02)))
        rots.append(base @ pert)
    mean = tf.chordal_mean_rotation(np.stack(rots))
    ang = tf.quat_geodesic_distance(tf.quat_from_matrix(mean), tf.quat_from_matrix(base))
    assert ang < 0.02
