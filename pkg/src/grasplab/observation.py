"""Actor/critic observation assembly.

The actor sees deployable sensors only (tactile + proprioception + time
encoding); the critic sees the same vector extended with simulation-only
privileged state. The flat layout is fixed per run and exported as a
machine-readable schema so checkpoints can refuse incompatible inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, SensorFaultError, ValidationError

NUM_TACTILE_SENSORS = 11
NUM_HAND_JOINTS = 16
NUM_PAD_SITES = 11   # distance fields are evaluated at the tactile pad sites

SCHEMA_VERSION = 1


@dataclass
class TactileReading:
    """3D contact force per tactile pad, in each pad's local frame [N]."""

    sensor_forces: np.ndarray  # (11, 3)

    def __post_init__(self):
        self.sensor_forces = np.asarray(self.sensor_forces, dtype=float)
        if self.sensor_forces.shape != (NUM_TACTILE_SENSORS, 3):
            raise ValidationError(
                f"expected ({NUM_TACTILE_SENSORS}, 3) tactile forces, "
                f"got {self.sensor_forces.shape}")

    @classmethod
    def zeros(cls) -> "TactileReading":
        return cls(np.zeros((NUM_TACTILE_SENSORS, 3)))

    def magnitudes(self) -> np.ndarray:
        return np.linalg.norm(self.sensor_forces, axis=1)


@dataclass
class Proprioception:
    """Internal hand state: joints, root motion, and recent actions."""

    joint_positions: np.ndarray       # (16,) [rad]
    joint_velocities: np.ndarray      # (16,) [rad/s]
    root_pose: np.ndarray             # (7,) position + unit quaternion
    root_linear_velocity: np.ndarray  # (3,) [m/s]
    root_angular_velocity: np.ndarray  # (3,) [rad/s]
    action_history: np.ndarray        # (H, action_dim), zero-padded pre-warm-up

    def __post_init__(self):
        self.joint_positions = np.asarray(self.joint_positions, dtype=float)
        self.joint_velocities = np.asarray(self.joint_velocities, dtype=float)
        self.root_pose = np.asarray(self.root_pose, dtype=float)
        self.root_linear_velocity = np.asarray(self.root_linear_velocity, dtype=float)
        self.root_angular_velocity = np.asarray(self.root_angular_velocity, dtype=float)
        self.action_history = np.atleast_2d(np.asarray(self.action_history, dtype=float))
        if self.joint_positions.shape != (NUM_HAND_JOINTS,):
            raise ValidationError(f"expected {NUM_HAND_JOINTS} joint positions")
        if self.joint_velocities.shape != (NUM_HAND_JOINTS,):
            raise ValidationError(f"expected {NUM_HAND_JOINTS} joint velocities")
        if self.root_pose.shape != (7,):
            raise ValidationError("root_pose must have 7 entries (pos + quat)")

    @classmethod
    def zeros(cls, action_dim: int, history_len: int = 3) -> "Proprioception":
        return cls(
            joint_positions=np.zeros(NUM_HAND_JOINTS),
            joint_velocities=np.zeros(NUM_HAND_JOINTS),
            root_pose=np.array([0, 0, 0, 1, 0, 0, 0], dtype=float),
            root_linear_velocity=np.zeros(3),
            root_angular_velocity=np.zeros(3),
            action_history=np.zeros((history_len, action_dim)),
        )


@dataclass
class PrivilegedState:
    """Simulation-only quantities the critic may exploit."""

    object_rotation: np.ndarray          # (4,) unit quaternion
    object_linear_velocity: np.ndarray   # (3,) [m/s]
    object_angular_velocity: np.ndarray  # (3,) [rad/s]
    mean_max_principal_strain: float     # 0 for rigid objects
    joint_object_distances: np.ndarray   # (N,) [m]
    joint_environment_distances: np.ndarray  # (N,) [m]

    def __post_init__(self):
        self.object_rotation = np.asarray(self.object_rotation, dtype=float)
        self.object_linear_velocity = np.asarray(self.object_linear_velocity, dtype=float)
        self.object_angular_velocity = np.asarray(self.object_angular_velocity, dtype=float)
        self.joint_object_distances = np.asarray(self.joint_object_distances, dtype=float)
        self.joint_environment_distances = np.asarray(
            self.joint_environment_distances, dtype=float)
        if np.any(self.joint_object_distances < 0) or np.any(
                self.joint_environment_distances < 0):
            raise ValidationError("distances must be nonnegative")

    @classmethod
    def zeros(cls, n_sites: int = NUM_PAD_SITES) -> "PrivilegedState":
        return cls(
            object_rotation=np.array([1.0, 0, 0, 0]),
            object_linear_velocity=np.zeros(3),
            object_angular_velocity=np.zeros(3),
            mean_max_principal_strain=0.0,
            joint_object_distances=np.zeros(n_sites),
            joint_environment_distances=np.zeros(n_sites),
        )


@dataclass
class ObservationBundle:
    """Flat actor and critic vectors; critic_vector starts with actor_vector."""

    actor_vector: np.ndarray
    critic_vector: np.ndarray
    time_encoding: np.ndarray  # (3,) = (t/n, sin(2*pi*t/n), cos(2*pi*t/n))


class ObservationLayout:
    """Field order and lengths of the flat observation vectors.

    Actor fields come first (in a documented fixed order, ending with the
    time encoding); privileged fields follow for the critic. ``to_dict``
    emits the machine-readable schema recorded in checkpoints.
    """

    def __init__(self, action_dim: int, history_len: int = 3,
                 n_sites: int = NUM_PAD_SITES, tactile_enabled: bool = True):
        if action_dim < 1 or history_len < 0 or n_sites < 1:
            raise ConfigurationError("invalid observation layout dimensions")
        self.action_dim = action_dim
        self.history_len = history_len
        self.n_sites = n_sites
        self.tactile_enabled = tactile_enabled
        self.actor_fields = [
            ("tactile", NUM_TACTILE_SENSORS * 3),
            ("joint_positions", NUM_HAND_JOINTS),
            ("joint_velocities", NUM_HAND_JOINTS),
            ("root_pose", 7),
            ("root_linear_velocity", 3),
            ("root_angular_velocity", 3),
            ("action_history", history_len * action_dim),
            ("time_encoding", 3),
        ]
        self.privileged_fields = [
            ("object_rotation", 4),
            ("object_linear_velocity", 3),
            ("object_angular_velocity", 3),
            ("mean_max_principal_strain", 1),
            ("joint_object_distances", n_sites),
            ("joint_environment_distances", n_sites),
        ]

    @property
    def actor_dim(self) -> int:
        return sum(n for _, n in self.actor_fields)

    @property
    def privileged_dim(self) -> int:
        return sum(n for _, n in self.privileged_fields)

    @property
    def critic_dim(self) -> int:
        return self.actor_dim + self.privileged_dim

    def field_slice(self, name: str) -> slice:
        offset = 0
        for fname, n in [*self.actor_fields, *self.privileged_fields]:
            if fname == name:
                return slice(offset, offset + n)
            offset += n
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "action_dim": self.action_dim,
            "history_len": self.history_len,
            "n_sites": self.n_sites,
            "tactile_enabled": self.tactile_enabled,
            "tactile_frame": "sensor_local",
            "actor_fields": [list(f) for f in self.actor_fields],
            "privileged_fields": [list(f) for f in self.privileged_fields],
            "actor_dim": self.actor_dim,
            "critic_dim": self.critic_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObservationLayout":
        layout = cls(action_dim=d["action_dim"], history_len=d["history_len"],
                     n_sites=d["n_sites"], tactile_enabled=d["tactile_enabled"])
        if layout.to_dict() != {**d}:
            raise ConfigurationError("observation schema dict is inconsistent")
        return layout

    def matches(self, other: "ObservationLayout") -> bool:
        return self.to_dict() == other.to_dict()

    def write_schema(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class FeatureScaling:
    """Static per-field affine normalization: out = (x - offset) * scale.

    Scales/offsets are keyed by layout field name; unlisted fields pass
    through unchanged. Kept static so rollouts are deterministic; a
    running variant can be layered on top and snapshotted per rollout.
    """

    scales: dict = field(default_factory=dict)
    offsets: dict = field(default_factory=dict)

    def apply(self, vec: np.ndarray, layout: ObservationLayout) -> np.ndarray:
        if not self.scales and not self.offsets:
            return vec
        out = vec.copy()
        for name in set(self.scales) | set(self.offsets):
            try:
                sl = layout.field_slice(name)
            except KeyError:
                raise ConfigurationError(f"unknown observation field: {name}")
            if sl.stop <= len(out):
                out[sl] = (out[sl] - self.offsets.get(name, 0.0)) * self.scales.get(name, 1.0)
        return out


def time_encoding(step: int, horizon: int) -> np.ndarray:
    """Normalized step with one sinusoidal period per episode."""
    u = step / horizon
    return np.array([u, np.sin(2.0 * np.pi * u), np.cos(2.0 * np.pi * u)])


def build_observation(tactile: TactileReading,
                      proprio: Proprioception,
                      privileged: PrivilegedState,
                      step: int,
                      horizon: int,
                      layout: ObservationLayout,
                      scaling: FeatureScaling | None = None) -> ObservationBundle:
    """Concatenate sensors into the flat actor/critic vectors.

    Raises SensorFaultError on non-finite sensor content (the episode is
    expected to terminate as a failure). The actor vector never contains
    privileged fields; tactile entries are zeroed when the layout has
    tactile disabled (the disable-tactile ablation).
    """
    if not (0 <= step < horizon):
        raise ValidationError(f"step {step} outside [0, {horizon})")
    tac = tactile.sensor_forces.ravel()
    if layout.history_len and proprio.action_history.shape != (
            layout.history_len, layout.action_dim):
        raise ValidationError(
            f"action history shape {proprio.action_history.shape} does not match "
            f"layout ({layout.history_len}, {layout.action_dim})")
    t_enc = time_encoding(step, horizon)
    actor_parts = [
        tac if layout.tactile_enabled else np.zeros_like(tac),
        proprio.joint_positions,
        proprio.joint_velocities,
        proprio.root_pose,
        proprio.root_linear_velocity,
        proprio.root_angular_velocity,
        proprio.action_history.ravel(),
        t_enc,
    ]
    actor = np.concatenate(actor_parts)
    if not np.all(np.isfinite(actor)):
        raise SensorFaultError("non-finite actor sensor values")
    if len(privileged.joint_object_distances) != layout.n_sites:
        raise ValidationError("privileged distance vectors do not match layout")
    priv = np.concatenate([
        privileged.object_rotation,
        privileged.object_linear_velocity,
        privileged.object_angular_velocity,
        [privileged.mean_max_principal_strain],
        privileged.joint_object_distances,
        privileged.joint_environment_distances,
    ])
    if not np.all(np.isfinite(priv)):
        raise SensorFaultError("non-finite privileged values")
    critic = np.concatenate([actor, priv])
    if scaling is not None:
        critic = scaling.apply(critic, layout)
        actor = critic[:layout.actor_dim].copy()
    return ObservationBundle(actor_vector=actor, critic_vector=critic,
                             time_encoding=t_enc)


def simulate_tactile(contacts,
                     noise_scale: float = 0.01,
                     rng: np.random.Generator | None = None,
                     max_force: float = 20.0,
                     pad_rotations: np.ndarray | None = None) -> TactileReading:
    """Aggregate contact forces into a per-pad tactile reading.

    ``contacts`` is an iterable of (sensor_id, world force 3-vector);
    forces on the same pad superpose, are rotated into the pad's local
    frame (``pad_rotations[i]`` maps pad->world; identity when omitted),
    then zero-mean Gaussian noise is added and the magnitude clamped.
    """
    world = np.zeros((NUM_TACTILE_SENSORS, 3))
    for sensor_id, force in contacts:
        if not 0 <= sensor_id < NUM_TACTILE_SENSORS:
            raise IndexError(f"sensor id {sensor_id} outside [0, {NUM_TACTILE_SENSORS})")
        world[sensor_id] += np.asarray(force, dtype=float)
    if pad_rotations is None:
        local = world
    else:
        # world -> pad: transpose of the pad->world rotation
        local = np.einsum("nij,nj->ni", np.transpose(pad_rotations, (0, 2, 1)), world)
    if noise_scale > 0.0:
        if rng is None:
            rng = np.random.default_rng()
        local = local + rng.normal(0.0, noise_scale, size=local.shape)
    mags = np.linalg.norm(local, axis=1, keepdims=True)
    over = mags > max_force
    if np.any(over):
        local = np.where(over, local * (max_force / np.maximum(mags, 1e-12)), local)
    return TactileReading(local)
