"""Quaternion and rotation-matrix utilities.

Conventions used throughout the package:
  - quaternions are numpy arrays ``[w, x, y, z]``
  - canonical sign is ``w >= 0`` (``quat_canonical`` enforces it)
  - rotation matrices act on column vectors: ``v_world = R @ v_local``
"""

from __future__ import annotations

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Flip sign so w >= 0; q and -q encode the same rotation."""
    q = np.asarray(q, dtype=float)
    return -q if q[0] < 0.0 else q.copy()


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        return IDENTITY_QUAT.copy()
    return quat_canonical(q / n)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a ⊗ b (apply b first, then a)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by quaternion q."""
    w = q[0]
    u = np.asarray(q[1:], dtype=float)
    v = np.asarray(v, dtype=float)
    return v + 2.0 * np.cross(u, np.cross(u, v) + w * v)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Quaternion of a rotation matrix (Shepperd's method), canonical sign."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([
            0.25 * s,
            (R[2, 1] - R[1, 2]) / s,
            (R[0, 2] - R[2, 0]) / s,
            (R[1, 0] - R[0, 1]) / s,
        ])
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array([
            (R[2, 1] - R[1, 2]) / s,
            0.25 * s,
            (R[0, 1] + R[1, 0]) / s,
            (R[0, 2] + R[2, 0]) / s,
        ])
    elif R[1, 1] >= R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array([
            (R[0, 2] - R[2, 0]) / s,
            (R[0, 1] + R[1, 0]) / s,
            0.25 * s,
            (R[1, 2] + R[2, 1]) / s,
        ])
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array([
            (R[1, 0] - R[0, 1]) / s,
            (R[0, 2] + R[2, 0]) / s,
            (R[1, 2] + R[2, 1]) / s,
            0.25 * s,
        ])
    return quat_normalize(q)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        return IDENTITY_QUAT.copy()
    half = 0.5 * angle
    return quat_canonical(np.concatenate([[np.cos(half)], np.sin(half) * axis / n]))


def quat_from_rotvec(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        return IDENTITY_QUAT.copy()
    return quat_from_axis_angle(v, angle)


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    q = quat_normalize(q)
    w = np.clip(q[0], -1.0, 1.0)
    angle = 2.0 * np.arccos(w)
    s = np.sqrt(max(1.0 - w * w, 0.0))
    if s < 1e-12:
        return 2.0 * q[1:]  # small-angle limit
    return angle * q[1:] / s


def quat_geodesic_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Rotation angle (rad) between the rotations encoded by a and b."""
    a = quat_normalize(a)
    b = quat_normalize(b)
    # chord form stays accurate near zero where arccos loses digits
    chord = min(np.linalg.norm(a - b), np.linalg.norm(a + b))
    return 4.0 * np.arcsin(min(0.5 * chord, 1.0))


def quat_angular_velocity(q_prev: np.ndarray, q_next: np.ndarray, dt: float) -> np.ndarray:
    """Average body angular velocity taking q_prev to q_next over dt (world frame)."""
    dq = quat_multiply(q_next, quat_conjugate(q_prev))
    return quat_to_rotvec(dq) / dt


def integrate_quat(q: np.ndarray, omega: np.ndarray, dt: float) -> np.ndarray:
    """First-order quaternion integration with world-frame angular velocity."""
    return quat_normalize(quat_multiply(quat_from_rotvec(np.asarray(omega) * dt), q))


def random_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation (Shoemake's subgroup algorithm)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    return quat_canonical(np.array([
        a * np.sin(2 * np.pi * u2),
        a * np.cos(2 * np.pi * u2),
        b * np.sin(2 * np.pi * u3),
        b * np.cos(2 * np.pi * u3),
    ]))


def project_rotation(M: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense (special orthogonal Procrustes)."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def polar_rotation(F: np.ndarray) -> np.ndarray:
    """Rotation factor R of the polar decomposition F = R U (det(R) = +1)."""
    return project_rotation(F)


def chordal_mean_rotation(rotations: np.ndarray) -> np.ndarray:
    """Chordal-L2 mean of rotation matrices: project the arithmetic mean onto SO(3)."""
    rotations = np.asarray(rotations, dtype=float)
    return project_rotation(rotations.mean(axis=0))
