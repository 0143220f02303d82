"""Grasp pose archetypes: data-driven pre-grasp initializations.

An archetype places the hand root relative to the object frame and sets
the initial joint angles; it applies to a declared set of shape classes.
Archetypes ship as YAML, same structured-text family as the asset
catalog.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from ..errors import ConfigurationError
from ..transforms import quat_normalize
from .hand import NUM_JOINTS, HandModel


@dataclass
class GraspPoseArchetype:
    """Pre-grasp hand placement relative to the object frame.

    The root lands at ``object_com + root_offset + root_extent_coeff *
    half_extents``; the extent term lets one archetype place itself just
    above (or beside) objects of any size class.
    """

    id: str
    root_offset: np.ndarray        # (3,) [m] absolute part of the offset
    root_orientation: np.ndarray   # (4,) unit quaternion wxyz
    joint_angles: np.ndarray       # (16,) [rad]
    root_extent_coeff: np.ndarray = (0.0, 0.0, 0.0)  # times object half-extents
    applicable_shapes: tuple = ("box", "sphere", "cylinder", "capsule", "mesh_lite")

    def __post_init__(self):
        self.root_offset = np.asarray(self.root_offset, dtype=float)
        self.root_extent_coeff = np.asarray(self.root_extent_coeff, dtype=float)
        self.root_orientation = quat_normalize(np.asarray(self.root_orientation, dtype=float))
        self.joint_angles = np.asarray(self.joint_angles, dtype=float)
        self.applicable_shapes = tuple(self.applicable_shapes)
        if self.root_offset.shape != (3,) or self.root_extent_coeff.shape != (3,):
            raise ConfigurationError(f"pose {self.id}: offsets must be 3-vectors")
        if self.joint_angles.shape != (NUM_JOINTS,):
            raise ConfigurationError(f"pose {self.id}: need {NUM_JOINTS} joint angles")
        limits = HandModel().config.joint_limits
        if np.any(self.joint_angles < limits[:, 0] - 1e-9) or np.any(
                self.joint_angles > limits[:, 1] + 1e-9):
            raise ConfigurationError(f"pose {self.id}: initial angles outside joint limits")

    def applies_to(self, shape: str) -> bool:
        return shape in self.applicable_shapes

    def root_position(self, object_com, half_extents) -> np.ndarray:
        return (np.asarray(object_com, dtype=float) + self.root_offset
                + self.root_extent_coeff * np.asarray(half_extents, dtype=float))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "root_offset": [float(v) for v in self.root_offset],
            "root_orientation": [float(v) for v in self.root_orientation],
            "joint_angles": [float(v) for v in self.joint_angles],
            "root_extent_coeff": [float(v) for v in self.root_extent_coeff],
            "applicable_shapes": list(self.applicable_shapes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GraspPoseArchetype":
        return cls(**d)


def load_pose_archetypes(path) -> dict:
    """Load archetypes from a YAML file; returns an id-keyed dict."""
    with open(path) as fh:
        docs = yaml.safe_load(fh)
    entries = docs if isinstance(docs, list) else [docs]
    poses = {}
    for entry in entries:
        try:
            pose = GraspPoseArchetype.from_dict(entry)
        except TypeError as e:
            raise ConfigurationError(f"bad pose entry in {path}: {e}") from e
        if pose.id in poses:
            raise ConfigurationError(f"duplicate pose id {pose.id!r}")
        poses[pose.id] = pose
    return poses


def save_pose_archetypes(path, poses) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump([p.to_dict() for p in poses], fh, sort_keys=False)
