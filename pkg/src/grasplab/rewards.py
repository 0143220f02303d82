"""Shaped reward suite for reach-grasp-lift training.

Seven independently testable terms plus their sum. Penalty coefficients
carry their own sign in the config (negative where a term should
penalize); term functions never flip signs behind the caller's back
except where the formula below says so.

Term summary (per control step):
  generic    k_alive * alive + k_joint_pos * ||j||^2 + k_joint_vel * ||vj||^2
  distance   -sum_i k_dist_i * d_i^2
  contact    sum_i [ b_i * k_contact * f_i - k_force_penalty * max(0, f_i - f_max) ]
  symmetry   -k_symmetry * Var(contacting fingertip force magnitudes)
  stability  -k_obj_linvel * ||v_o||^2 - k_obj_angvel * ||w_o||^2
  collision  sum_i log(min(d_env_i + floor, m) / m),  m = min_env_distance
  deform     -k_deform * node_count * mean_max_strain   (0 for rigid objects)
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class RewardCoefficients:
    """Weights and thresholds for every reward term.

    Defaults are tuned for the desk-scale tasks; none of them come from
    a published table, so they live in config and are logged with runs.
    """

    k_alive: float = 2.0
    k_joint_pos: float = -0.01       # penalty: negative
    k_joint_vel: float = -0.005      # penalty: negative
    k_distance: float = 10.0         # applied as -k * d^2
    k_contact: float = 0.5
    k_force_penalty: float = 2.0
    f_contact_min: float = 0.1       # [N] contact indicator threshold
    f_contact_max: float = 10.0      # [N] force cap before penalty
    k_object_linvel: float = 0.5
    k_object_angvel: float = 0.1
    min_env_distance: float = 0.05   # [m] collision log-barrier saturation
    env_distance_floor: float = 1e-4  # [m] keeps log finite at contact
    k_deform: float = 1.0
    k_symmetry: float = 0.5

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v):
                raise ConfigurationError(f"reward coefficient {f.name} must be finite")
        if not (self.f_contact_max > self.f_contact_min >= 0.0):
            raise ConfigurationError("need f_contact_max > f_contact_min >= 0")
        if not self.min_env_distance > 0.0:
            raise ConfigurationError("min_env_distance must be > 0")


@dataclass
class RewardBreakdown:
    """Per-term values for one step; total is their exact sum."""

    generic: float
    contact: float
    distance: float
    symmetry: float
    stability: float
    collision: float
    deform: float
    total: float

    TERM_NAMES = ("generic", "contact", "distance", "symmetry",
                  "stability", "collision", "deform")

    def terms(self) -> dict:
        return {name: getattr(self, name) for name in self.TERM_NAMES}

    def to_dict(self) -> dict:
        d = self.terms()
        d["total"] = self.total
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RewardBreakdown":
        return cls(**{k: float(d[k]) for k in (*cls.TERM_NAMES, "total")})


@dataclass
class RewardInputs:
    """Everything the total reward needs for one step.

    This is also the payload logged into trajectory traces so that
    replay can recompute every term without re-simulating.
    """

    alive: bool
    joint_positions: np.ndarray          # (16,) [rad]
    joint_velocities: np.ndarray         # (16,) [rad/s]
    joint_object_distances: np.ndarray   # (N,) pad-site to object CoM [m]
    contact_forces: np.ndarray           # (N,) per-pad force magnitudes [N]
    fingertip_forces: np.ndarray         # (4,) fingertip pad magnitudes [N]
    object_linear_velocity: np.ndarray   # (3,) [m/s]
    object_angular_velocity: np.ndarray  # (3,) [rad/s]
    joint_environment_distances: np.ndarray  # (N,) pad to environment [m]
    is_deformable: bool = False
    mean_max_strain: float = 0.0
    node_count: int = 0

    def to_dict(self) -> dict:
        return {
            "alive": bool(self.alive),
            "joint_positions": np.asarray(self.joint_positions, dtype=float).tolist(),
            "joint_velocities": np.asarray(self.joint_velocities, dtype=float).tolist(),
            "joint_object_distances": np.asarray(self.joint_object_distances, dtype=float).tolist(),
            "contact_forces": np.asarray(self.contact_forces, dtype=float).tolist(),
            "fingertip_forces": np.asarray(self.fingertip_forces, dtype=float).tolist(),
            "object_linear_velocity": np.asarray(self.object_linear_velocity, dtype=float).tolist(),
            "object_angular_velocity": np.asarray(self.object_angular_velocity, dtype=float).tolist(),
            "joint_environment_distances": np.asarray(self.joint_environment_distances, dtype=float).tolist(),
            "is_deformable": bool(self.is_deformable),
            "mean_max_strain": float(self.mean_max_strain),
            "node_count": int(self.node_count),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RewardInputs":
        return cls(**{**d,
                      "joint_positions": np.array(d["joint_positions"]),
                      "joint_velocities": np.array(d["joint_velocities"]),
                      "joint_object_distances": np.array(d["joint_object_distances"]),
                      "contact_forces": np.array(d["contact_forces"]),
                      "fingertip_forces": np.array(d["fingertip_forces"]),
                      "object_linear_velocity": np.array(d["object_linear_velocity"]),
                      "object_angular_velocity": np.array(d["object_angular_velocity"]),
                      "joint_environment_distances": np.array(d["joint_environment_distances"])})


def generic_reward(alive: bool, joint_positions, joint_velocities,
                   c: RewardCoefficients) -> float:
    """Survival bonus plus signed quadratic joint displacement/velocity terms."""
    j = np.asarray(joint_positions, dtype=float)
    v = np.asarray(joint_velocities, dtype=float)
    if not (np.all(np.isfinite(j)) and np.all(np.isfinite(v))):
        raise DomainError("joint state must be finite")
    return float(c.k_alive * bool(alive)
                 + c.k_joint_pos * np.sum(j * j)
                 + c.k_joint_vel * np.sum(v * v))


def distance_reward(distances, c: RewardCoefficients) -> float:
    """Quadratic approach incentive: -sum k * d_i^2, maximal at contact."""
    d = np.asarray(distances, dtype=float)
    if np.any(d < 0.0):
        raise DomainError("distances must be nonnegative")
    k = np.broadcast_to(np.asarray(c.k_distance, dtype=float), d.shape)
    return float(-np.sum(k * d * d))


def contact_reward(forces, c: RewardCoefficients) -> float:
    """Reward established contact, penalize force beyond the permitted cap.

    A pad contributes only once its force exceeds f_contact_min; the
    over-cap penalty applies to the positive part above f_contact_max.
    """
    f = np.asarray(forces, dtype=float)
    b = f > c.f_contact_min
    gain = np.where(b, c.k_contact * f, 0.0)
    penalty = c.k_force_penalty * np.maximum(0.0, f - c.f_contact_max)
    return float(np.sum(gain - penalty))


def stability_reward(object_linear_velocity, object_angular_velocity,
                     c: RewardCoefficients) -> float:
    """Penalize residual object motion while grasped."""
    v = np.asarray(object_linear_velocity, dtype=float)
    w = np.asarray(object_angular_velocity, dtype=float)
    return float(-c.k_object_linvel * np.sum(v * v)
                 - c.k_object_angvel * np.sum(w * w))


def collision_reward(env_distances, c: RewardCoefficients) -> float:
    """Log-barrier penalty for pads approaching the environment.

    Each pad contributes log(min(d + floor, m) / m) with m the safe
    distance: exactly zero at or beyond m, increasingly negative as the
    pad closes in, kept finite at contact by the floor. The term is
    nonincreasing as any distance shrinks.
    """
    d = np.asarray(env_distances, dtype=float)
    if np.any(d < 0.0):
        raise DomainError("environment distances must be nonnegative")
    clipped = np.minimum(d + c.env_distance_floor, c.min_env_distance)
    return float(np.sum(np.log(clipped / c.min_env_distance)))


def symmetry_reward(fingertip_forces, c: RewardCoefficients) -> float:
    """Negative population variance of contacting fingertip force magnitudes.

    Rewards balanced antipodal loading; 0 with fewer than two tips in
    contact (contact meaning force above f_contact_min).
    """
    f = np.asarray(fingertip_forces, dtype=float)
    contacting = f[f > c.f_contact_min]
    if contacting.size < 2:
        return 0.0
    return float(-c.k_symmetry * np.var(contacting))


def deform_reward(is_deformable: bool, mean_strain: float, node_count: int,
                  c: RewardCoefficients) -> float:
    """Penalty on aggregate tensile strain; identically zero for rigid objects."""
    if not is_deformable:
        return 0.0
    if not np.isfinite(mean_strain):
        raise DomainError("mean strain must be finite")
    if node_count < 1:
        raise DomainError("deformable objects must report node_count >= 1")
    return float(-c.k_deform * node_count * mean_strain)


def total_reward(inputs: RewardInputs, c: RewardCoefficients) -> RewardBreakdown:
    """Evaluate every term and their sum for one step."""
    terms = {
        "generic": generic_reward(inputs.alive, inputs.joint_positions,
                                  inputs.joint_velocities, c),
        "contact": contact_reward(inputs.contact_forces, c),
        "distance": distance_reward(inputs.joint_object_distances, c),
        "symmetry": symmetry_reward(inputs.fingertip_forces, c),
        "stability": stability_reward(inputs.object_linear_velocity,
                                      inputs.object_angular_velocity, c),
        "collision": collision_reward(inputs.joint_environment_distances, c),
        "deform": deform_reward(inputs.is_deformable, inputs.mean_max_strain,
                                inputs.node_count, c),
    }
    return RewardBreakdown(total=float(sum(terms.values())), **terms)
