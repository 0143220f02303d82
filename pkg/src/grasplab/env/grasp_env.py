"""Desk-scale reach-grasp-lift environment.

A kinematic 16-DoF hand on a 6-DoF floating root interacts with one
rigid or deformable object resting on a support plane. Contacts are
damped penalty springs with regularized Coulomb friction; soft bodies
integrate semi-implicitly. Actions command normalized joint targets and
a root pose delta; once tactile contact is confirmed a scripted ascent
assist raises the root so the policy's job is to establish and maintain
a liftable grasp (the reward carries no height term).

Each instance is single-threaded and shares no mutable state, so many
instances can be stepped in parallel and moved between workers across
episodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import deform
from ..errors import ConfigurationError, DomainError, PhaseError
from ..metrics import EpisodeRecord
from ..observation import (
    FeatureScaling,
    ObservationLayout,
    PrivilegedState,
    Proprioception,
    TactileReading,
    build_observation,
    simulate_tactile,
)
from ..rewards import RewardBreakdown, RewardCoefficients, RewardInputs, total_reward
from ..transforms import (
    integrate_quat,
    quat_angular_velocity,
    quat_canonical,
    quat_conjugate,
    quat_multiply,
)
from .contact import (
    ContactParams,
    ground_contact_coefficients,
    ground_rigid_contact,
    ground_soft_contact,
    pad_rigid_contacts,
    pad_soft_contacts,
)
from .hand import FINGERTIP_PADS, NUM_JOINTS, NUM_PADS, HandModel, HandState
from .objects import ObjectSpec, RigidBody, size_class
from .poses import GraspPoseArchetype
from .softbody import SoftBody

ACTION_DIM = NUM_JOINTS + 6
DISTURB_AXES = np.array([
    [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
], dtype=float)


@dataclass
class GraspEnvConfig:
    control_dt: float = 1.0 / 60.0
    substeps: int = 8
    horizon: int = 200
    gravity: float = 9.81
    spawn_noise: float = 0.005        # hand-root placement noise sigma [m]
    action_history: int = 3
    grasp_pads_required: int = 2
    grasp_hold_time: float = 0.25     # [s] sustained contact for s_grasp
    lift_height: float = 0.1          # [m] above initial object CoM
    lift_hold_time: float = 1.0       # [s] sustained height for s_lift
    lift_assist_rate: float = 0.12    # [m/s] scripted root ascent after grasp
    lift_assist_height: float = 0.22  # [m] assist stops above spawn root
    disturb_force: float = 2.5        # [N]
    disturb_duration: float = 2.0     # [s]
    disturb_max_displacement: float = 0.02  # [m] peak CoM excursion bound
    size_small_max: float = 0.05
    size_large_min: float = 0.10
    tactile_noise: float = 0.01       # [N]
    tactile_max_force: float = 20.0   # [N]
    workspace_radius: float = 0.5     # object escaping ends the episode
    finger_stall_force: float = 5.0   # [N] pad load at which a finger stops closing
    strain_tau1: float = deform.DEFAULT_TAU1
    strain_tau2: float = deform.DEFAULT_TAU2
    contact: ContactParams = field(default_factory=ContactParams)

    def __post_init__(self):
        if self.control_dt <= 0 or self.substeps < 1 or self.horizon < 2:
            raise ConfigurationError("invalid control_dt/substeps/horizon")
        if isinstance(self.contact, dict):
            self.contact = ContactParams(**self.contact)

    @property
    def grasp_hold_steps(self) -> int:
        return max(1, round(self.grasp_hold_time / self.control_dt))

    @property
    def lift_hold_steps(self) -> int:
        return max(1, round(self.lift_hold_time / self.control_dt))


class GraspEnv:
    """Reach-grasp-lift task instance. See module docstring."""

    def __init__(self, config: GraspEnvConfig | None = None,
                 reward_coefficients: RewardCoefficients | None = None,
                 disable_tactile: bool = False,
                 disable_deform_penalty: bool = False,
                 scaling: FeatureScaling | None = None):
        self.config = config or GraspEnvConfig()
        coeffs = reward_coefficients or RewardCoefficients()
        if disable_deform_penalty:
            coeffs = replace(coeffs, k_deform=0.0)
        self.reward_coefficients = coeffs
        self.hand_model = HandModel()
        self.layout = ObservationLayout(
            action_dim=ACTION_DIM,
            history_len=self.config.action_history,
            n_sites=NUM_PADS,
            tactile_enabled=not disable_tactile,
        )
        self.scaling = scaling
        self._finger_pads = [
            [i for i, (pf, _, _) in enumerate(self.hand_model.pad_sites) if pf == f]
            for f in range(4)]
        self._rng = np.random.default_rng(0)
        self._spec: ObjectSpec | None = None
        self._done = True

    # ----------------------------------------------------------------- reset

    def reset(self, spec: ObjectSpec, pose: GraspPoseArchetype, seed: int):
        """Deterministically (re)build the scene; returns the first bundle."""
        if not pose.applies_to(spec.shape):
            raise ConfigurationError(
                f"pose {pose.id!r} does not apply to shape {spec.shape!r}")
        cfg = self.config
        self._rng = np.random.default_rng(np.uint64(seed) if seed >= 0 else seed)
        self._spec = spec
        self._pose_id = pose.id

        object_pos = np.array([0.0, 0.0, 0.0])
        if spec.is_deformable:
            self._soft = SoftBody(spec, object_pos)
            # drop the lattice so its lowest node touches the plane
            low = self._soft.positions[:, 2].min()
            self._soft.positions[:, 2] -= low
            self._soft.reference_positions = self._soft.positions.copy()
            self._soft.rest_local = self._soft.positions - self._soft.center_of_mass()
            self._body = None
            h = cfg.control_dt / cfg.substeps
            if h > self._soft.max_stable_dt():
                raise ConfigurationError(
                    f"object {spec.name!r} needs substep <= "
                    f"{self._soft.max_stable_dt():.4g}s; configured {h:.4g}s "
                    f"(raise substeps or lower stiffness)")
        else:
            self._soft = None
            self._body = RigidBody(spec, object_pos)
            k_pt, _, _, _ = ground_contact_coefficients(
                spec, cfg.contact, cfg.control_dt / cfg.substeps)
            self._body.position[2] = self._body.rest_height(
                k_normal=k_pt, gravity=cfg.gravity)

        self._initial_object_com = self._object_com()
        self._reference_orientation = (self._body.orientation.copy()
                                       if self._body is not None else None)

        root = pose.root_position(self._initial_object_com,
                                  np.asarray(spec.scale) / 2.0)
        if cfg.spawn_noise > 0.0:
            root = root + self._rng.normal(0.0, cfg.spawn_noise, size=3)
        self._hand = HandState.at_pose(self.hand_model, root,
                                       pose.root_orientation, pose.joint_angles)
        self._spawn_root_z = float(self._hand.root_position[2])

        self._step_count = 0
        self._done = False
        self._fault = ""
        self.s_grasp = False
        self.s_lift = False
        self.s_disturb = False
        self._assist_active = False
        self._contact_streak = 0
        self._lift_streak = 0
        self._phase = "reach"
        self._phase_trace: list[str] = []
        self._reward_total = 0.0
        self._reward_term_totals = {k: 0.0 for k in RewardBreakdown.TERM_NAMES}
        self._lift_strain_samples: list[float] = []
        self._disturb_peak = 0.0
        self._action_history = np.zeros((cfg.action_history, ACTION_DIM))
        self._last_action = np.zeros(ACTION_DIM)
        self._root_velocity = np.zeros(3)
        self._root_ang_velocity = np.zeros(3)
        self._prev_com = self._initial_object_com.copy()
        self._prev_rotation = np.array([1.0, 0.0, 0.0, 0.0])
        self._last_pad_forces = np.zeros((NUM_PADS, 3))
        self._last_reward_inputs: RewardInputs | None = None

        return self._build_observation(step_index=0)

    # ----------------------------------------------------------------- step

    def step(self, action):
        """Advance one control step; returns (bundle, breakdown, done, info)."""
        if self._done:
            raise PhaseError("episode is done; call reset() first")
        action = np.asarray(action, dtype=float).ravel()
        if action.shape != (ACTION_DIM,):
            raise DomainError(f"action must have {ACTION_DIM} entries")
        if not np.all(np.isfinite(action)):
            raise DomainError("action must be finite")
        cfg = self.config
        action = np.clip(action, -1.0, 1.0)
        self._last_action = action.copy()

        joint_targets = self.hand_model.normalized_to_angles(action[:NUM_JOINTS])
        droot = action[NUM_JOINTS:NUM_JOINTS + 3] * \
            self.hand_model.config.max_root_speed * cfg.control_dt
        drot = action[NUM_JOINTS + 3:] * \
            self.hand_model.config.max_root_turn_rate * cfg.control_dt
        if self._assist_active and (self._hand.root_position[2] - self._spawn_root_z
                                    < cfg.lift_assist_height):
            droot = droot.copy()
            droot[2] += cfg.lift_assist_rate * cfg.control_dt

        pad_force_accum = self._advance_physics(joint_targets, droot, drot)
        self._root_velocity = droot / cfg.control_dt
        self._root_ang_velocity = drot / cfg.control_dt

        if not self._state_finite():
            self._fault = "non-finite dynamics"
            self._done = True

        self._last_pad_forces = pad_force_accum
        breakdown, privileged = self._score_step(pad_force_accum)
        self._update_phase(pad_force_accum)

        self._action_history = np.roll(self._action_history, 1, axis=0)
        self._action_history[0] = action
        self._step_count += 1
        if self._step_count >= cfg.horizon:
            self._done = True
        com = self._object_com()
        if np.linalg.norm(com[:2]) > cfg.workspace_radius:
            self._fault = self._fault or "object left the workspace"
            self._done = True
        if self._done:
            self._phase = "done" if not self._fault else self._phase
        self._phase_trace.append(self._phase)

        bundle = self._build_observation(
            step_index=min(self._step_count, cfg.horizon - 1),
            privileged=privileged)
        info = {
            "phase": self._phase,
            "s_grasp": self.s_grasp,
            "s_lift": self.s_lift,
            "height": float(com[2] - self._initial_object_com[2]),
            "fault": self._fault,
            "mean_strain": privileged.mean_max_principal_strain,
        }
        return bundle, breakdown, self._done, info

    # ------------------------------------------------------------ internals

    def _advance_physics(self, joint_targets, droot, drot):
        """Run the substep loop; returns mean per-pad force on the object.

        The hand is kinematic, so its trajectory over the control step is
        known up front: joints ramp toward their targets under the rate
        limit (and the slip clutch), and pad positions are interpolated
        linearly between start and end FK poses. Contacts and object
        integration run per substep.
        """
        cfg = self.config
        h = cfg.control_dt / cfg.substeps
        model = self.hand_model
        hand = self._hand

        delta = np.clip(joint_targets - hand.joint_angles,
                        -model.config.max_joint_speed * cfg.control_dt,
                        model.config.max_joint_speed * cfg.control_dt)
        # slip-clutch stall: a loaded finger may open but not close further
        loads = np.linalg.norm(self._last_pad_forces, axis=1)
        for f in range(4):
            pads = self._finger_pads[f]
            if loads[pads].sum() > cfg.finger_stall_force:
                flex = slice(4 * f + 1, 4 * f + 4)
                delta[flex] = np.minimum(delta[flex], 0.0)

        start_pads = hand.pad_positions
        start_palm = hand.palm_position
        end_angles = model.clamp_angles(hand.joint_angles + delta)
        end_root = hand.root_position + droot
        end_quat = (integrate_quat(hand.root_orientation, drot / cfg.control_dt,
                                   cfg.control_dt) if np.any(drot)
                    else hand.root_orientation)
        end_pads, end_rots = model.fk_pads(end_root, end_quat, end_angles)
        end_palm = model.palm_center(end_root, end_quat)
        pad_vel = (end_pads - start_pads) / cfg.control_dt
        palm_vel = ((end_palm - start_palm) / cfg.control_dt)[None, :]

        pad_force_accum = np.zeros((NUM_PADS, 3))
        for s in range(1, cfg.substeps + 1):
            frac = s / cfg.substeps
            pads_s = start_pads + frac * (end_pads - start_pads)
            palm_s = (start_palm + frac * (end_palm - start_palm))[None, :]
            if self._body is not None:
                ground_rigid_contact(self._body, cfg.contact, h)
                applied = pad_rigid_contacts(
                    pads_s, pad_vel, model.config.pad_radius,
                    self._body, cfg.contact, h)
                pad_rigid_contacts(palm_s, palm_vel, model.config.palm_radius,
                                   self._body, cfg.contact, h)
                if self._disturb_force is not None:
                    self._body.apply_force(self._disturb_force)
                self._body.step(h, cfg.gravity)
            else:
                ground_soft_contact(self._soft, cfg.contact, h)
                applied = pad_soft_contacts(
                    pads_s, pad_vel, model.config.pad_radius,
                    self._soft, cfg.contact, h)
                pad_soft_contacts(palm_s, palm_vel, model.config.palm_radius,
                                  self._soft, cfg.contact, h)
                if self._disturb_force is not None:
                    self._soft.apply_uniform_force(self._disturb_force)
                self._soft.step(h, cfg.gravity)
            pad_force_accum += applied

        hand.joint_velocities = delta / cfg.control_dt
        hand.joint_angles = end_angles
        hand.root_position = end_root
        hand.root_orientation = end_quat
        hand.pad_positions = end_pads
        hand.pad_rotations = end_rots
        hand.pad_velocities = pad_vel
        hand.palm_position = end_palm
        hand.palm_velocity = palm_vel[0]
        return pad_force_accum / cfg.substeps

    _disturb_force = None  # world-frame constant force while the protocol runs

    def _object_com(self) -> np.ndarray:
        return (self._body.position.copy() if self._body is not None
                else self._soft.center_of_mass())

    def _object_rotation_and_rates(self, dt):
        """Privileged object rotation (vs reference) and velocities."""
        if self._body is not None:
            q_rel = quat_canonical(quat_multiply(
                self._body.orientation, quat_conjugate(self._reference_orientation)))
            return (q_rel, self._body.linear_velocity.copy(),
                    self._body.angular_velocity.copy(), 0.0, 0)
        state = self._soft.body_state(timestamp=self._step_count * dt)
        score = deform.deformation_score(state)
        mode = deform.select_rotation_mode(score, self.config.strain_tau1,
                                           self.config.strain_tau2)
        q = deform.estimate_rotation(state, mode)
        strain = deform.mean_max_principal_strain(state)
        com = state.center_of_mass()
        v = deform.com_velocity(self._prev_com, com, dt)
        omega = quat_angular_velocity(self._prev_rotation, q, dt)
        self._prev_com = com
        self._prev_rotation = q
        return q, v, omega, strain, state.node_count

    def _distances(self):
        com = self._object_com()
        d_obj = np.linalg.norm(self._hand.pad_positions - com, axis=1)
        d_env = np.maximum(self._hand.pad_positions[:, 2]
                           - self.hand_model.config.pad_radius, 0.0)
        return d_obj, d_env

    def _score_step(self, pad_forces):
        dt = self.config.control_dt
        q, v, omega, strain, nodes = self._object_rotation_and_rates(dt)
        d_obj, d_env = self._distances()
        magnitudes = np.linalg.norm(pad_forces, axis=1)
        inputs = RewardInputs(
            alive=not self._fault,
            joint_positions=self._hand.joint_angles.copy(),
            joint_velocities=self._hand.joint_velocities.copy(),
            joint_object_distances=d_obj,
            contact_forces=magnitudes,
            fingertip_forces=magnitudes[list(FINGERTIP_PADS)],
            object_linear_velocity=v,
            object_angular_velocity=omega,
            joint_environment_distances=d_env,
            is_deformable=self._spec.is_deformable,
            mean_max_strain=strain,
            node_count=nodes,
        )
        breakdown = total_reward(inputs, self.reward_coefficients)
        self._last_reward_inputs = inputs
        self._reward_total += breakdown.total
        for k in RewardBreakdown.TERM_NAMES:
            self._reward_term_totals[k] += getattr(breakdown, k)
        self._privileged = PrivilegedState(
            object_rotation=q,
            object_linear_velocity=v,
            object_angular_velocity=omega,
            mean_max_principal_strain=strain,
            joint_object_distances=d_obj,
            joint_environment_distances=d_env,
        )
        return breakdown, self._privileged

    def _update_phase(self, pad_forces):
        cfg = self.config
        magnitudes = np.linalg.norm(pad_forces, axis=1)
        in_contact = int(np.sum(magnitudes > self.reward_coefficients.f_contact_min))
        if in_contact >= cfg.grasp_pads_required:
            self._contact_streak += 1
        else:
            self._contact_streak = 0
        if self._contact_streak >= cfg.grasp_hold_steps:
            if not self.s_grasp:
                self.s_grasp = True
            self._assist_active = True

        height = self._object_com()[2] - self._initial_object_com[2]
        if self.s_grasp and height >= cfg.lift_height:
            self._lift_streak += 1
            if self._spec.is_deformable and self._last_reward_inputs is not None:
                self._lift_strain_samples.append(
                    self._last_reward_inputs.mean_max_strain)
        else:
            self._lift_streak = 0
        if self._lift_streak >= cfg.lift_hold_steps:
            self.s_lift = True

        if self.s_lift or height >= cfg.lift_height:
            self._phase = "lift"
        elif self.s_grasp:
            self._phase = "grasp"
        else:
            self._phase = "reach"

    def _build_observation(self, step_index, privileged=None):
        cfg = self.config
        contacts = [(i, -f) for i, f in enumerate(self._last_pad_forces)
                    if np.any(f)]
        tactile = simulate_tactile(
            contacts, noise_scale=cfg.tactile_noise, rng=self._rng,
            max_force=cfg.tactile_max_force, pad_rotations=self._hand.pad_rotations)
        proprio = Proprioception(
            joint_positions=self._hand.joint_angles.copy(),
            joint_velocities=self._hand.joint_velocities.copy(),
            root_pose=self._hand.root_pose_vector(),
            root_linear_velocity=self._root_velocity.copy(),
            root_angular_velocity=self._root_ang_velocity.copy(),
            action_history=self._action_history.copy(),
        )
        if privileged is None:
            d_obj, d_env = self._distances()
            privileged = PrivilegedState(
                object_rotation=np.array([1.0, 0, 0, 0]),
                object_linear_velocity=np.zeros(3),
                object_angular_velocity=np.zeros(3),
                mean_max_principal_strain=0.0,
                joint_object_distances=d_obj,
                joint_environment_distances=d_env,
            )
        return build_observation(tactile, proprio, privileged, step_index,
                                 cfg.horizon, self.layout, scaling=self.scaling)

    def _state_finite(self) -> bool:
        if self._body is not None:
            return bool(np.all(np.isfinite(self._body.position))
                        and np.all(np.isfinite(self._body.linear_velocity)))
        return bool(np.all(np.isfinite(self._soft.positions))
                    and np.all(np.isfinite(self._soft.velocities)))

    # ------------------------------------------------------------ disturbance

    def apply_disturbance(self, direction_index: int, policy_fn=None) -> float:
        """Apply the constant disturbance force along one axis and return the
        peak CoM displacement. Requires a successful lift."""
        if not self.s_lift:
            raise PhaseError("disturbance requires a successful lift")
        if not 0 <= direction_index < len(DISTURB_AXES):
            raise DomainError(f"direction_index must be in [0, 6), got {direction_index}")
        cfg = self.config
        steps = max(1, round(cfg.disturb_duration / cfg.control_dt))
        start_com = self._object_com()
        peak = 0.0
        self._phase = "disturb"
        force = cfg.disturb_force * DISTURB_AXES[direction_index]
        bundle = self._build_observation(
            step_index=min(self._step_count, cfg.horizon - 1))
        try:
            self._disturb_force = force
            for _ in range(steps):
                action = self._last_action if policy_fn is None else policy_fn(bundle)
                action = np.clip(np.asarray(action, dtype=float).ravel(), -1.0, 1.0)
                joint_targets = self.hand_model.normalized_to_angles(action[:NUM_JOINTS])
                droot = action[NUM_JOINTS:NUM_JOINTS + 3] * \
                    self.hand_model.config.max_root_speed * cfg.control_dt
                drot = action[NUM_JOINTS + 3:] * \
                    self.hand_model.config.max_root_turn_rate * cfg.control_dt
                pad_forces = self._advance_physics(joint_targets, droot, drot)
                self._last_pad_forces = pad_forces
                if not self._state_finite():
                    self._fault = "non-finite dynamics during disturbance"
                    return float("inf")
                peak = max(peak, float(np.linalg.norm(self._object_com() - start_com)))
                bundle = self._build_observation(
                    step_index=min(self._step_count, cfg.horizon - 1))
        finally:
            self._disturb_force = None
        self._disturb_peak = max(self._disturb_peak, peak)
        return peak

    def run_disturbance_protocol(self, policy_fn=None):
        """Test all six axes from the same held state (snapshot/restore);
        sets s_disturb iff every peak stays under the bound."""
        if not self.s_lift:
            raise PhaseError("disturbance protocol requires a successful lift")
        snap = self._snapshot()
        peaks = []
        for direction in range(len(DISTURB_AXES)):
            self._restore(snap)
            peaks.append(self.apply_disturbance(direction, policy_fn=policy_fn))
        self._restore(snap)
        self._disturb_peak = max(peaks)
        self.s_disturb = all(p < self.config.disturb_max_displacement for p in peaks)
        self._phase_trace.extend(["disturb"] * len(DISTURB_AXES))
        return self.s_disturb, peaks

    def _snapshot(self) -> dict:
        return {
            "hand": self._hand.snapshot(),
            "body": self._body.snapshot() if self._body is not None else None,
            "soft": self._soft.snapshot() if self._soft is not None else None,
            "rng": self._rng.bit_generator.state,
            "prev_com": self._prev_com.copy(),
            "prev_rotation": self._prev_rotation.copy(),
            "last_pad_forces": self._last_pad_forces.copy(),
            "step_count": self._step_count,
        }

    def _restore(self, snap: dict) -> None:
        self._hand.restore(snap["hand"])
        if self._body is not None:
            self._body.restore(snap["body"])
        if self._soft is not None:
            self._soft.restore(snap["soft"])
        self._rng.bit_generator.state = snap["rng"]
        self._prev_com = snap["prev_com"].copy()
        self._prev_rotation = snap["prev_rotation"].copy()
        self._last_pad_forces = snap["last_pad_forces"].copy()
        self._step_count = snap["step_count"]

    # ------------------------------------------------------------ reporting

    @property
    def done(self) -> bool:
        return self._done

    @property
    def steps_used(self) -> int:
        return self._step_count

    @property
    def last_reward_inputs(self) -> RewardInputs | None:
        return self._last_reward_inputs

    def episode_record(self) -> EpisodeRecord:
        if self._spec is None:
            raise PhaseError("no episode has been run")
        return EpisodeRecord(
            object_name=self._spec.name,
            size_class=size_class(self._spec, self.config.size_small_max,
                                  self.config.size_large_min),
            material=self._spec.material,
            s_grasp=self.s_grasp,
            s_lift=self.s_lift,
            s_disturb=self.s_disturb,
            object_displacement_under_disturbance=self._disturb_peak,
            steps_used=self._step_count,
            phase_trace=list(self._phase_trace),
            reward_total=self._reward_total,
            reward_term_totals=dict(self._reward_term_totals),
            mean_strain_during_lift=float(np.mean(self._lift_strain_samples))
            if self._lift_strain_samples else 0.0,
            fault=self._fault,
        )
