"""Simulation environments: object assets, soft bodies, contact, the
reach-grasp-lift task, and the miniature squeeze-and-hold task."""

from .objects import ObjectSpec, load_catalog, size_class
from .grasp_env import GraspEnv, GraspEnvConfig
from .toy import SqueezeHoldEnv, SqueezeHoldConfig

__all__ = [
    "ObjectSpec", "load_catalog", "size_class",
    "GraspEnv", "GraspEnvConfig",
    "SqueezeHoldEnv", "SqueezeHoldConfig",
]
