"""Kinematic four-finger hand: 16 joints, 11 tactile pads, floating root.

Finger layout (palm local frame): three fingers rooted on the +x edge of
the palm and an opposing thumb on -x; the palm faces -z, so positive
flexion curls fingertips toward the palm normal and the finger/thumb
tips converge below the palm. Each finger has one abduction joint
(about local z) followed by three flexion joints (about local y).

Pad order (tactile sensor indices): thumb [mid, tip] = 0..1, then index,
middle, ring [proximal, mid, tip] = 2..10. Fingertip pads are
(1, 4, 7, 10).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..transforms import quat_to_matrix

NUM_JOINTS = 16
NUM_PADS = 11
FINGERTIP_PADS = (1, 4, 7, 10)

_ROT_X_PI = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])


def _rz(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _ry(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass
class HandConfig:
    """Desk-scale hand geometry and actuation limits."""

    link_lengths: tuple = (0.045, 0.032, 0.028)
    link_radius: float = 0.009
    pad_radius: float = 0.008
    palm_radius: float = 0.024        # collision body closing the grasp cage
    palm_offset: float = 0.004        # palm sphere center below the root
    finger_base_x: float = 0.048
    finger_spacing_y: float = 0.028
    max_joint_speed: float = 4.0       # [rad/s]
    max_root_speed: float = 0.25       # [m/s]
    max_root_turn_rate: float = 1.5    # [rad/s]
    # per-joint (lo, hi); same pattern for each finger: abduction + 3 flexions
    joint_limits: np.ndarray = field(default_factory=lambda: np.tile(
        np.array([[-0.4, 0.4], [-0.3, 1.6], [0.0, 1.8], [0.0, 1.6]]), (4, 1)))

    def __post_init__(self):
        self.joint_limits = np.asarray(self.joint_limits, dtype=float)
        if self.joint_limits.shape != (NUM_JOINTS, 2):
            raise ConfigurationError("joint_limits must be (16, 2)")
        if np.any(self.joint_limits[:, 0] >= self.joint_limits[:, 1]):
            raise ConfigurationError("joint limits must satisfy lo < hi")


class HandModel:
    """Forward kinematics from (root pose, joint angles) to pad poses."""

    def __init__(self, config: HandConfig | None = None):
        self.config = config or HandConfig()
        c = self.config
        # finger order: thumb, index, middle, ring
        self.finger_bases = np.array([
            [-c.finger_base_x, 0.0, 0.0],
            [c.finger_base_x, c.finger_spacing_y, 0.0],
            [c.finger_base_x, 0.0, 0.0],
            [c.finger_base_x, -c.finger_spacing_y, 0.0],
        ])
        self.finger_yaw = np.array([np.pi, 0.0, 0.0, 0.0])
        # (finger, link, along-fraction): which links carry pads
        self.pad_sites = [
            (0, 1, 0.5), (0, 2, 0.8),
            (1, 0, 0.5), (1, 1, 0.5), (1, 2, 0.8),
            (2, 0, 0.5), (2, 1, 0.5), (2, 2, 0.8),
            (3, 0, 0.5), (3, 1, 0.5), (3, 2, 0.8),
        ]
        assert len(self.pad_sites) == NUM_PADS

    def clamp_angles(self, angles: np.ndarray) -> np.ndarray:
        lim = self.config.joint_limits
        return np.clip(angles, lim[:, 0], lim[:, 1])

    def normalized_to_angles(self, a: np.ndarray) -> np.ndarray:
        """Map [-1, 1] action entries onto the joint-limit range."""
        lim = self.config.joint_limits
        return lim[:, 0] + (np.clip(a, -1.0, 1.0) + 1.0) * 0.5 * (lim[:, 1] - lim[:, 0])

    def fk_pads(self, root_pos, root_quat, joint_angles):
        """Pad centers (11, 3) and pad->world rotations (11, 3, 3)."""
        c = self.config
        R_root = quat_to_matrix(root_quat)
        root_pos = np.asarray(root_pos, dtype=float)
        lengths = c.link_lengths
        positions = np.empty((NUM_PADS, 3))
        rotations = np.empty((NUM_PADS, 3, 3))
        link_frames = []
        for f in range(4):
            q = joint_angles[4 * f: 4 * f + 4]
            R = _rz(self.finger_yaw[f] + q[0]) @ _ry(q[1])
            p = self.finger_bases[f].copy()
            frames = []
            for k in range(3):
                frames.append((p.copy(), R.copy()))
                p = p + R @ np.array([lengths[k], 0.0, 0.0])
                if k < 2:
                    R = R @ _ry(q[k + 2])
            link_frames.append(frames)
        for idx, (f, k, frac) in enumerate(self.pad_sites):
            p0, R = link_frames[f][k]
            local = p0 + R @ np.array([frac * c.link_lengths[k], 0.0, -c.link_radius])
            positions[idx] = root_pos + R_root @ local
            rotations[idx] = R_root @ R @ _ROT_X_PI
        return positions, rotations

    def palm_center(self, root_pos, root_quat) -> np.ndarray:
        """Center of the palm collision sphere (no tactile sensing)."""
        R_root = quat_to_matrix(root_quat)
        return np.asarray(root_pos, dtype=float) + R_root @ np.array(
            [0.0, 0.0, -self.config.palm_offset])


@dataclass
class HandState:
    """Actuated hand state advanced kinematically by the environment."""

    root_position: np.ndarray
    root_orientation: np.ndarray   # unit quaternion wxyz
    joint_angles: np.ndarray       # (16,), kept inside limits
    joint_velocities: np.ndarray   # (16,)
    pad_positions: np.ndarray      # (11, 3) world
    pad_rotations: np.ndarray      # (11, 3, 3) pad->world
    pad_velocities: np.ndarray     # (11, 3) world, finite-differenced
    palm_position: np.ndarray      # (3,) world
    palm_velocity: np.ndarray      # (3,)

    @classmethod
    def at_pose(cls, model: HandModel, root_position, root_orientation,
                joint_angles) -> "HandState":
        angles = model.clamp_angles(np.asarray(joint_angles, dtype=float))
        pos, rot = model.fk_pads(root_position, root_orientation, angles)
        return cls(
            root_position=np.asarray(root_position, dtype=float).copy(),
            root_orientation=np.asarray(root_orientation, dtype=float).copy(),
            joint_angles=angles,
            joint_velocities=np.zeros(NUM_JOINTS),
            pad_positions=pos,
            pad_rotations=rot,
            pad_velocities=np.zeros((NUM_PADS, 3)),
            palm_position=model.palm_center(root_position, root_orientation),
            palm_velocity=np.zeros(3),
        )

    def refresh_pads(self, model: HandModel, h: float) -> None:
        """Recompute FK and finite-difference pad velocities over h."""
        prev = self.pad_positions
        prev_palm = self.palm_position
        pos, rot = model.fk_pads(self.root_position, self.root_orientation,
                                 self.joint_angles)
        self.pad_velocities = (pos - prev) / h
        self.pad_positions = pos
        self.pad_rotations = rot
        self.palm_position = model.palm_center(self.root_position,
                                               self.root_orientation)
        self.palm_velocity = (self.palm_position - prev_palm) / h

    def root_pose_vector(self) -> np.ndarray:
        return np.concatenate([self.root_position, self.root_orientation])

    def snapshot(self) -> dict:
        return {k: getattr(self, k).copy() for k in (
            "root_position", "root_orientation", "joint_angles",
            "joint_velocities", "pad_positions", "pad_rotations",
            "pad_velocities")}

    def restore(self, snap: dict) -> None:
        for k, v in snap.items():
            setattr(self, k, v.copy())
