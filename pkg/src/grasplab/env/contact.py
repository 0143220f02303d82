"""Penalty-based contact with regularized Coulomb friction.

Contacts are resolved as damped penalty springs at query points (tactile
pad spheres, soft-body nodes, rigid support points) against object SDFs
or the ground plane. The effective stiffness is capped per contact by the
recipient's mass share and the substep so the explicit integration stays
stable. Friction is impulse-capped Coulomb: the tangential force opposes
relative slip, saturated both at mu * normal force and at the force that
would cancel the slip within one substep (true stiction, stable under
explicit integration).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .objects import RigidBody, support_balls_local
from .softbody import SoftBody
from ..transforms import quat_to_matrix


@dataclass
class ContactParams:
    k_normal: float = 3000.0       # [N/m] penalty stiffness (cap applies)
    damping_ratio: float = 0.8     # ground contacts: settle fast
    pad_damping_ratio: float = 0.3  # pad contacts: soft on approach
    mu: float = 0.8                # Coulomb friction coefficient
    max_normal_force: float = 20.0  # [N] per-contact cap
    stability_fraction: float = 0.25  # of m/h^2 allowed as stiffness
    pad_contact_share: int = 4      # pads assumed pressing a rigid body at once

    def effective_stiffness(self, mass: float, h: float) -> float:
        """Per-contact stiffness bounded for stable explicit integration.

        ``mass`` must be the recipient's share for one contact point; the
        caller divides the body mass by the expected simultaneous contact
        count so the summed stiffness/damping stays inside the bound.
        """
        return min(self.k_normal, self.stability_fraction * mass / (h * h))


def _normal_forces(pen, v_normal, k, c, params: ContactParams):
    """Vectorized nonnegative normal force magnitudes."""
    return np.clip(k * pen - c * v_normal, 0.0, params.max_normal_force)


def _friction_forces(v_tangent, f_normal, mu, m_eff, h):
    """Impulse-capped Coulomb friction, rows aligned with contacts.

    The tangential force opposes relative slip but never exceeds the
    force that would stop the slip within one substep (m_eff |v_t| / h),
    which keeps explicit integration stable and gives true stiction.
    """
    speed = np.linalg.norm(v_tangent, axis=-1)
    mag = np.minimum(mu * f_normal, m_eff * speed / h)
    direction = v_tangent / np.maximum(speed, 1e-12)[..., None]
    return -mag[..., None] * direction


def pad_rigid_contacts(pad_positions, pad_velocities, pad_radius: float,
                       body: RigidBody, params: ContactParams, h: float,
                       mu: float | None = None):
    """Resolve pad-sphere vs rigid-object contacts.

    Applies forces/torques to the body and returns per-pad forces applied
    by each pad on the object (world frame, (n_pads, 3)); the tactile
    reaction is the negation.
    """
    pad_positions = np.asarray(pad_positions, dtype=float)
    applied = np.zeros((len(pad_positions), 3))
    phi, n = body.sdf_world_batch(pad_positions)
    pen = pad_radius - phi
    hit = pen > 0.0
    if not np.any(hit):
        return applied
    mu = body.spec.friction if mu is None else mu
    m_share = body.spec.mass / params.pad_contact_share
    k = params.effective_stiffness(m_share, h)
    c = 2.0 * params.pad_damping_ratio * np.sqrt(k * m_share)

    idx = np.nonzero(hit)[0]
    n_hit = n[idx]
    contact_pts = pad_positions[idx] - n_hit * phi[idx, None]
    v_obj = (body.linear_velocity
             + np.cross(body.angular_velocity, contact_pts - body.position))
    v_rel = v_obj - np.asarray(pad_velocities, dtype=float)[idx]
    v_n = np.einsum("ij,ij->i", v_rel, n_hit)
    f_n = _normal_forces(pen[idx], v_n, k, c, params)
    active = f_n > 0.0
    if not np.any(active):
        return applied
    idx, n_hit, contact_pts = idx[active], n_hit[active], contact_pts[active]
    v_rel, v_n, f_n = v_rel[active], v_n[active], f_n[active]
    v_t = v_rel - v_n[:, None] * n_hit
    f_obj = -n_hit * f_n[:, None] + _friction_forces(v_t, f_n, mu, m_share, h)
    for i, cp, f in zip(idx, contact_pts, f_obj):
        body.apply_force(f, point=cp)
        applied[i] = f
    return applied


def pad_soft_contacts(pad_positions, pad_velocities, pad_radius: float,
                      soft: SoftBody, params: ContactParams, h: float,
                      mu: float | None = None):
    """Resolve pad-sphere vs soft-body-node contacts; returns per-pad
    applied force on the object's nodes (world frame)."""
    pad_positions = np.asarray(pad_positions, dtype=float)
    pad_velocities = np.asarray(pad_velocities, dtype=float)
    mu = soft.spec.friction if mu is None else mu
    k = params.effective_stiffness(soft.node_mass, h)
    c = 2.0 * params.pad_damping_ratio * np.sqrt(k * soft.node_mass)
    reach = pad_radius + soft.node_radius
    applied = np.zeros((len(pad_positions), 3))

    delta = soft.positions[None, :, :] - pad_positions[:, None, :]  # (P, N, 3)
    dist = np.linalg.norm(delta, axis=2)
    hit_pad, hit_node = np.nonzero(dist < reach)
    if len(hit_pad) == 0:
        return applied
    d = dist[hit_pad, hit_node]
    n = delta[hit_pad, hit_node] / np.maximum(d, 1e-9)[:, None]
    pen = reach - d
    v_rel = soft.velocities[hit_node] - pad_velocities[hit_pad]
    v_n = np.einsum("ij,ij->i", v_rel, n)
    f_n = _normal_forces(pen, v_n, k, c, params)
    v_t = v_rel - v_n[:, None] * n
    f_node = n * f_n[:, None] + _friction_forces(v_t, f_n, mu, soft.node_mass, h)
    f_node[f_n <= 0.0] = 0.0
    soft.apply_forces(hit_node, f_node)
    np.add.at(applied, hit_pad, f_node)
    return applied


def ground_contact_coefficients(spec, params: ContactParams, h: float):
    """Shared per-point ground stiffness/damping for a rigid spec."""
    pts, radii = support_balls_local(spec)
    m_share = spec.mass / len(pts)
    k = params.effective_stiffness(m_share, h)
    c = 2.0 * params.damping_ratio * np.sqrt(k * m_share)
    return k, c, pts, radii


def ground_rigid_contact(body: RigidBody, params: ContactParams, h: float,
                         ground_z: float = 0.0) -> float:
    """Penalty ground plane under a rigid body; returns total normal force."""
    if body.spec.kinematic:
        return 0.0
    k, c, pts, radii = ground_contact_coefficients(body.spec, params, h)
    R = quat_to_matrix(body.orientation)
    pw = body.position + pts @ R.T
    pen = ground_z - (pw[:, 2] - radii)
    hit = pen > 0.0
    if not np.any(hit):
        return 0.0
    idx = np.nonzero(hit)[0]
    v = (body.linear_velocity
         + np.cross(body.angular_velocity, pw[idx] - body.position))
    f_n = _normal_forces(pen[idx], v[:, 2], k, c, params)
    v_t = v.copy()
    v_t[:, 2] = 0.0
    forces = np.zeros((len(idx), 3))
    forces[:, 2] = f_n
    m_share = body.spec.mass / len(pts)
    forces += _friction_forces(v_t, f_n, body.spec.friction, m_share, h)
    forces[f_n <= 0.0] = 0.0
    for p, f in zip(pw[idx], forces):
        body.apply_force(f, point=p)
    return float(np.sum(f_n))


def ground_soft_contact(soft: SoftBody, params: ContactParams, h: float,
                        ground_z: float = 0.0) -> float:
    """Penalty ground plane under every soft-body node."""
    pen = ground_z - (soft.positions[:, 2] - soft.node_radius)
    hit = pen > 0.0
    if not np.any(hit):
        return 0.0
    k = params.effective_stiffness(soft.node_mass, h)
    c = 2.0 * params.damping_ratio * np.sqrt(k * soft.node_mass)
    idx = np.nonzero(hit)[0]
    v = soft.velocities[idx]
    f_n = _normal_forces(pen[idx], v[:, 2], k, c, params)
    v_t = v.copy()
    v_t[:, 2] = 0.0
    forces = np.zeros((len(idx), 3))
    forces[:, 2] = f_n
    forces += _friction_forces(v_t, f_n, soft.spec.friction, soft.node_mass, h)
    forces[f_n <= 0.0] = 0.0
    soft.apply_forces(idx, forces)
    return float(np.sum(f_n))
