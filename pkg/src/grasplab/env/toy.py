"""Miniature 1-DoF squeeze-and-hold task on a deformable ball.

Two opposing kinematic pads straddle a small mass-spring ball resting on
the ground. The single action sets the target pad gap; whenever both
pads feel contact the gripper carriage rises at a constant rate (and
sinks back otherwise), so the ball is lifted purely by friction from an
adequate squeeze. Success mirrors the full task: hold the ball above the
lift height for the hold duration. Ball radius and lateral offset are
randomized per episode, which makes tactile feedback the only reliable
way to meter the squeeze.

The observation uses the standard layout (11 tactile slots, 16 joint
slots) with one active joint and two active pads mapped onto the thumb
and index fingertip sensors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..deform import mean_max_principal_strain
from ..errors import ConfigurationError, DomainError, PhaseError
from ..metrics import EpisodeRecord
from ..observation import (
    ObservationLayout,
    PrivilegedState,
    Proprioception,
    build_observation,
    simulate_tactile,
)
from ..rewards import RewardBreakdown, RewardCoefficients, RewardInputs, total_reward
from .contact import ContactParams, ground_soft_contact, pad_soft_contacts
from .objects import ObjectSpec
from .softbody import SoftBody

# active pad -> tactile sensor slots (thumb tip, index tip)
PAD_SENSORS = (1, 4)


@dataclass
class SqueezeHoldConfig:
    control_dt: float = 1.0 / 60.0
    substeps: int = 8
    horizon: int = 200
    gravity: float = 9.81
    ball_radius: float = 0.025       # [m] nominal
    ball_radius_jitter: float = 0.08  # relative, uniform
    ball_offset_noise: float = 0.003  # [m] lateral spawn noise sigma
    ball_mass: float = 0.08
    ball_stiffness: float = 150.0
    ball_friction: float = 0.9
    node_resolution: int = 3
    pad_radius: float = 0.012
    gap_min: float = 0.018           # [m] fully squeezed
    gap_max: float = 0.085           # [m] fully open
    pad_speed: float = 0.25          # [m/s] gap actuation rate
    lift_rate: float = 0.1           # [m/s] carriage ascent while holding
    drop_rate: float = 0.15          # [m/s] descent when contact is lost
    lift_travel: float = 0.16        # [m] carriage ceiling above start
    lift_height: float = 0.1
    lift_hold_time: float = 1.0
    hold_force: float = 0.1          # [N] per-pad force that counts as holding
    action_history: int = 3
    tactile_noise: float = 0.005
    tactile_max_force: float = 20.0
    contact: ContactParams = field(default_factory=ContactParams)

    def __post_init__(self):
        if isinstance(self.contact, dict):
            self.contact = ContactParams(**self.contact)
        if not (0 < self.gap_min < self.gap_max):
            raise ConfigurationError("need 0 < gap_min < gap_max")

    @property
    def lift_hold_steps(self) -> int:
        return max(1, round(self.lift_hold_time / self.control_dt))


class SqueezeHoldEnv:
    """1-DoF deformable squeeze task; same step interface as GraspEnv."""

    ACTION_DIM = 1

    def __init__(self, config: SqueezeHoldConfig | None = None,
                 reward_coefficients: RewardCoefficients | None = None,
                 disable_tactile: bool = False,
                 disable_deform_penalty: bool = False):
        self.config = config or SqueezeHoldConfig()
        coeffs = reward_coefficients or RewardCoefficients()
        if disable_deform_penalty:
            coeffs = replace(coeffs, k_deform=0.0)
        self.reward_coefficients = coeffs
        self.layout = ObservationLayout(
            action_dim=self.ACTION_DIM,
            history_len=self.config.action_history,
            tactile_enabled=not disable_tactile,
        )
        self._done = True
        self._spec_template = ObjectSpec(
            name="toy_ball", shape="sphere", material="deformable",
            scale=(2 * self.config.ball_radius,) * 3,
            mass=self.config.ball_mass, friction=self.config.ball_friction,
            stiffness=self.config.ball_stiffness,
            node_resolution=self.config.node_resolution)

    # ----------------------------------------------------------------- reset

    def reset_episode(self, seed: int):
        cfg = self.config
        self._rng = np.random.default_rng(np.uint64(seed) if seed >= 0 else seed)
        jitter = 1.0 + cfg.ball_radius_jitter * (2.0 * self._rng.random() - 1.0)
        radius = cfg.ball_radius * jitter
        offset = cfg.ball_offset_noise * self._rng.normal()
        self._spec = replace(self._spec_template, scale=(2 * radius,) * 3)
        self._soft = SoftBody(self._spec, np.array([offset, 0.0, 0.0]))
        low = self._soft.positions[:, 2].min() - self._soft.node_radius
        self._soft.positions[:, 2] -= low
        self._soft.reference_positions = self._soft.positions.copy()
        self._soft.rest_local = self._soft.positions - self._soft.center_of_mass()
        h = cfg.control_dt / cfg.substeps
        if h > self._soft.max_stable_dt():
            raise ConfigurationError(
                f"squeeze task needs substep <= {self._soft.max_stable_dt():.4g}s")

        self._ball_radius = radius
        self._initial_com = self._soft.center_of_mass()
        self._carriage_z0 = float(self._initial_com[2])
        self._carriage_z = self._carriage_z0
        self._gap = cfg.gap_max
        self._pad_positions = self._pad_layout()
        self._pad_velocities = np.zeros((2, 3))
        # pads face each other across x
        self._pad_rotations = np.stack([
            np.array([[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]),
            np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]]),
        ])
        self._step_count = 0
        self._done = False
        self._fault = ""
        self.s_grasp = False
        self.s_lift = False
        self.s_disturb = False
        self._lift_streak = 0
        self._holding = False
        self._phase = "reach"
        self._phase_trace = []
        self._reward_total = 0.0
        self._reward_term_totals = {k: 0.0 for k in RewardBreakdown.TERM_NAMES}
        self._lift_strain_samples = []
        self._action_history = np.zeros((cfg.action_history, self.ACTION_DIM))
        self._last_pad_forces = np.zeros((2, 3))
        self._last_strain = 0.0
        self._prev_com = self._initial_com.copy()
        self._gap_velocity = 0.0
        self._carriage_velocity = 0.0
        self._privileged = None
        return self._build_observation(0)

    def _pad_layout(self) -> np.ndarray:
        half = self._gap / 2.0
        return np.array([
            [-half - self.config.pad_radius, 0.0, self._carriage_z],
            [half + self.config.pad_radius, 0.0, self._carriage_z],
        ])

    # ----------------------------------------------------------------- step

    def step(self, action):
        if self._done:
            raise PhaseError("episode is done; call reset_episode() first")
        cfg = self.config
        action = np.asarray(action, dtype=float).ravel()
        if action.shape != (self.ACTION_DIM,):
            raise DomainError("squeeze action must have exactly 1 entry")
        if not np.all(np.isfinite(action)):
            raise DomainError("action must be finite")
        a = float(np.clip(action[0], -1.0, 1.0))
        target_gap = cfg.gap_min + (a + 1.0) * 0.5 * (cfg.gap_max - cfg.gap_min)

        # carriage motion decided by last step's hold state
        if self._holding:
            z_target = min(self._carriage_z + cfg.lift_rate * cfg.control_dt,
                           self._carriage_z0 + cfg.lift_travel)
        else:
            z_target = max(self._carriage_z - cfg.drop_rate * cfg.control_dt,
                           self._carriage_z0)

        h = cfg.control_dt / cfg.substeps
        max_gap_step = cfg.pad_speed * h
        pad_force_accum = np.zeros((2, 3))
        dz = (z_target - self._carriage_z) / cfg.substeps
        gap_before = self._gap
        for _ in range(cfg.substeps):
            gap_delta = np.clip(target_gap - self._gap, -max_gap_step, max_gap_step)
            self._gap += gap_delta
            self._carriage_z += dz
            new_pads = self._pad_layout()
            self._pad_velocities = (new_pads - self._pad_positions) / h
            self._pad_positions = new_pads
            ground_soft_contact(self._soft, cfg.contact, h)
            applied = pad_soft_contacts(
                self._pad_positions, self._pad_velocities, cfg.pad_radius,
                self._soft, cfg.contact, h)
            self._soft.step(h, cfg.gravity)
            pad_force_accum += applied
        pad_forces = pad_force_accum / cfg.substeps
        self._last_pad_forces = pad_forces
        self._gap_velocity = (self._gap - gap_before) / cfg.control_dt
        self._carriage_velocity = dz * cfg.substeps / cfg.control_dt

        if not (np.all(np.isfinite(self._soft.positions))
                and np.all(np.isfinite(self._soft.velocities))):
            self._fault = "non-finite dynamics"
            self._done = True

        magnitudes = np.linalg.norm(pad_forces, axis=1)
        self._holding = bool(np.all(magnitudes > cfg.hold_force))
        if self._holding and not self.s_grasp:
            self.s_grasp = True

        breakdown = self._score_step(magnitudes)

        com = self._soft.center_of_mass()
        height = com[2] - self._initial_com[2]
        if self.s_grasp and height >= cfg.lift_height:
            self._lift_streak += 1
            self._lift_strain_samples.append(self._last_strain)
        else:
            self._lift_streak = 0
        if self._lift_streak >= cfg.lift_hold_steps:
            self.s_lift = True
        self._phase = ("lift" if height >= cfg.lift_height or self.s_lift
                       else "grasp" if self.s_grasp else "reach")

        self._action_history = np.roll(self._action_history, 1, axis=0)
        self._action_history[0] = a
        self._step_count += 1
        if self._step_count >= cfg.horizon:
            self._done = True
        if self._done:
            self._phase = "done" if not self._fault else self._phase
        self._phase_trace.append(self._phase)

        bundle = self._build_observation(min(self._step_count, cfg.horizon - 1))
        info = {"phase": self._phase, "s_grasp": self.s_grasp, "s_lift": self.s_lift,
                "height": float(height), "fault": self._fault,
                "mean_strain": self._last_strain, "gap": self._gap}
        return bundle, breakdown, self._done, info

    # ------------------------------------------------------------ internals

    def _score_step(self, magnitudes):
        cfg = self.config
        state = self._soft.body_state(self._step_count * cfg.control_dt)
        strain = mean_max_principal_strain(state)
        self._last_strain = strain

        com = state.center_of_mass()
        v = (com - self._prev_com) / cfg.control_dt
        self._prev_com = com

        contact_forces = np.zeros(11)
        contact_forces[list(PAD_SENSORS)] = magnitudes
        fingertip = np.zeros(4)
        fingertip[:2] = magnitudes
        d_obj = np.zeros(11)
        d_env = np.full(11, self.reward_coefficients.min_env_distance)
        for pad_idx, sensor in enumerate(PAD_SENSORS):
            d_obj[sensor] = np.linalg.norm(self._pad_positions[pad_idx] - com)
            d_env[sensor] = max(self._pad_positions[pad_idx][2] - cfg.pad_radius, 0.0)

        joints = np.zeros(16)
        joints[0] = self._gap
        joint_vel = np.zeros(16)
        joint_vel[0] = self._gap_velocity

        inputs = RewardInputs(
            alive=not self._fault,
            joint_positions=joints,
            joint_velocities=joint_vel,
            joint_object_distances=d_obj,
            contact_forces=contact_forces,
            fingertip_forces=fingertip,
            object_linear_velocity=v,
            object_angular_velocity=np.zeros(3),
            joint_environment_distances=d_env,
            is_deformable=True,
            mean_max_strain=strain,
            node_count=self._soft.node_count,
        )
        self._last_reward_inputs = inputs
        breakdown = total_reward(inputs, self.reward_coefficients)
        self._reward_total += breakdown.total
        for k in RewardBreakdown.TERM_NAMES:
            self._reward_term_totals[k] += getattr(breakdown, k)
        self._privileged = PrivilegedState(
            object_rotation=np.array([1.0, 0, 0, 0]),
            object_linear_velocity=v,
            object_angular_velocity=np.zeros(3),
            mean_max_principal_strain=strain,
            joint_object_distances=d_obj,
            joint_environment_distances=d_env,
        )
        return breakdown

    def _build_observation(self, step_index):
        cfg = self.config
        contacts = [(sensor, -self._last_pad_forces[pad_idx])
                    for pad_idx, sensor in enumerate(PAD_SENSORS)
                    if np.any(self._last_pad_forces[pad_idx])]
        rots = np.stack([np.eye(3)] * 11)
        for pad_idx, sensor in enumerate(PAD_SENSORS):
            rots[sensor] = self._pad_rotations[pad_idx]
        tactile = simulate_tactile(contacts, noise_scale=cfg.tactile_noise,
                                   rng=self._rng, max_force=cfg.tactile_max_force,
                                   pad_rotations=rots)
        joints = np.zeros(16)
        joints[0] = self._gap
        joint_vel = np.zeros(16)
        joint_vel[0] = self._gap_velocity
        proprio = Proprioception(
            joint_positions=joints,
            joint_velocities=joint_vel,
            root_pose=np.array([0.0, 0.0, self._carriage_z, 1.0, 0.0, 0.0, 0.0]),
            root_linear_velocity=np.array([0.0, 0.0, self._carriage_velocity]),
            root_angular_velocity=np.zeros(3),
            action_history=self._action_history.copy(),
        )
        privileged = self._privileged
        if privileged is None:
            privileged = PrivilegedState.zeros()
            com = self._soft.center_of_mass()
            d_obj = np.zeros(11)
            for pad_idx, sensor in enumerate(PAD_SENSORS):
                d_obj[sensor] = np.linalg.norm(self._pad_positions[pad_idx] - com)
            privileged.joint_object_distances = d_obj
        return build_observation(tactile, proprio, privileged, step_index,
                                 cfg.horizon, self.layout)

    # ------------------------------------------------------------ reporting

    @property
    def done(self) -> bool:
        return self._done

    def episode_record(self) -> EpisodeRecord:
        return EpisodeRecord(
            object_name=self._spec.name,
            size_class="small",
            material="deformable",
            s_grasp=self.s_grasp,
            s_lift=self.s_lift,
            s_disturb=False,
            object_displacement_under_disturbance=0.0,
            steps_used=self._step_count,
            phase_trace=list(self._phase_trace),
            reward_total=self._reward_total,
            reward_term_totals=dict(self._reward_term_totals),
            mean_strain_during_lift=float(np.mean(self._lift_strain_samples))
            if self._lift_strain_samples else 0.0,
            fault=self._fault,
        )
