"""Mass-spring soft bodies with semi-implicit (symplectic Euler) integration.

A deformable object is a lattice of point masses connected by damped
springs (structural + shear within a neighbor radius). Per-node
deformation gradients come from a weighted least-squares fit of
neighbor displacements against the rest geometry, which feeds the
strain-based privileged state.
"""

from __future__ import annotations

import numpy as np

from ..deform import DeformableBodyState
from ..errors import ConfigurationError
from .objects import ObjectSpec, sdf_local


class SoftBody:
    """Lattice soft body spawned at a world position (axis-aligned)."""

    def __init__(self, spec: ObjectSpec, position, drag: float = 0.3):
        if not spec.is_deformable:
            raise ConfigurationError(f"object {spec.name!r} is not deformable")
        self.spec = spec
        self.drag = drag

        res = spec.node_resolution
        half = np.asarray(spec.scale) / 2.0
        axes = [np.linspace(-h, h, res) for h in half]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        spacing = float(np.min([2 * h / (res - 1) for h in half]))
        keep = [p for p in grid if sdf_local(spec, p)[0] <= 0.26 * spacing]
        if len(keep) < 4:
            raise ConfigurationError(
                f"node_resolution {res} leaves too few interior nodes for {spec.name!r}")
        local = np.asarray(keep)

        self.rest_local = local
        self.positions = local + np.asarray(position, dtype=float)
        self.reference_positions = self.positions.copy()
        self.velocities = np.zeros_like(self.positions)
        self.node_mass = spec.mass / len(local)
        self.spacing = spacing
        self.node_radius = 0.45 * spacing  # contact thickness around each node

        # springs: all pairs within 1.75 spacings (structural + shear + bend)
        cutoff = 1.75 * spacing
        i_idx, j_idx = np.triu_indices(len(local), k=1)
        d = np.linalg.norm(local[i_idx] - local[j_idx], axis=1)
        mask = d <= cutoff
        self.edges = np.stack([i_idx[mask], j_idx[mask]], axis=1)
        self.rest_lengths = d[mask]
        self.stiffness = spec.stiffness
        # per-spring dashpot from the damping ratio and reduced mass
        m_red = self.node_mass / 2.0
        self.spring_damping = 2.0 * spec.damping * np.sqrt(self.stiffness * m_red)

        # neighbor table for deformation-gradient fits, padded to a fixed
        # width so the fit vectorizes; padding entries point at the node
        # itself (zero displacement, zero weight in the normal equations)
        neighbors = [np.concatenate([
            self.edges[self.edges[:, 0] == i, 1],
            self.edges[self.edges[:, 1] == i, 0]]) for i in range(len(local))]
        width = max(len(n) for n in neighbors)
        self._nbr_idx = np.array([np.pad(n, (0, width - len(n)),
                                         constant_values=i)
                                  for i, n in enumerate(neighbors)])
        dX = self.rest_local[self._nbr_idx] - self.rest_local[:, None, :]
        B = np.einsum("nki,nkj->nij", dX, dX)
        ranks = np.linalg.matrix_rank(B)
        self._grad_ok = ranks == 3
        B_safe = np.where(self._grad_ok[:, None, None], B, np.eye(3))
        self._grad_pinv = np.linalg.inv(B_safe)

        self._ext_forces = np.zeros_like(self.positions)

    # ------------------------------------------------------------- dynamics

    @property
    def node_count(self) -> int:
        return len(self.positions)

    def max_stable_dt(self) -> float:
        """Conservative symplectic-Euler stability bound for one substep."""
        return 0.5 / np.sqrt(2.0 * self.stiffness / self.node_mass)

    def apply_force(self, node_index: int, force) -> None:
        self._ext_forces[node_index] += force

    def apply_forces(self, node_indices, forces) -> None:
        """Accumulate forces on several nodes (duplicate indices allowed)."""
        np.add.at(self._ext_forces, node_indices, forces)

    def apply_uniform_force(self, force) -> None:
        self._ext_forces += np.asarray(force) / self.node_count

    def _spring_forces(self) -> np.ndarray:
        i, j = self.edges[:, 0], self.edges[:, 1]
        d = self.positions[j] - self.positions[i]
        lengths = np.linalg.norm(d, axis=1)
        lengths = np.maximum(lengths, 1e-9)
        dirs = d / lengths[:, None]
        rel_v = np.einsum("ij,ij->i", self.velocities[j] - self.velocities[i], dirs)
        mag = self.stiffness * (lengths - self.rest_lengths) + self.spring_damping * rel_v
        f = mag[:, None] * dirs
        forces = np.zeros_like(self.positions)
        np.add.at(forces, i, f)
        np.add.at(forces, j, -f)
        return forces

    def step(self, h: float, gravity: float) -> None:
        forces = self._spring_forces() + self._ext_forces
        forces[:, 2] -= self.node_mass * gravity
        # drag acts on motion relative to the CoM so free flight stays ballistic
        forces -= self.drag * self.node_mass * (self.velocities
                                                - self.velocities.mean(axis=0))
        self.velocities = self.velocities + (h / self.node_mass) * forces
        self.positions = self.positions + h * self.velocities
        self._ext_forces[:] = 0.0

    def mechanical_energy(self, gravity: float = 0.0) -> float:
        """Kinetic + spring potential (+ gravitational when requested)."""
        kinetic = 0.5 * self.node_mass * float(np.sum(self.velocities ** 2))
        i, j = self.edges[:, 0], self.edges[:, 1]
        lengths = np.linalg.norm(self.positions[j] - self.positions[i], axis=1)
        elastic = 0.5 * self.stiffness * float(np.sum((lengths - self.rest_lengths) ** 2))
        grav = gravity * self.node_mass * float(np.sum(self.positions[:, 2]))
        return kinetic + elastic + grav

    # ------------------------------------------------------------- queries

    def center_of_mass(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def com_velocity(self) -> np.ndarray:
        return self.velocities.mean(axis=0)

    def deformation_gradients(self) -> np.ndarray:
        """Per-node F from least-squares neighbor displacement fits.

        F solves min ||dx - F dX|| over spring neighbors (normal equations
        with the rest-geometry factor pre-inverted); degenerate or
        inverted fits fall back toward identity so det stays positive.
        """
        dX = self.rest_local[self._nbr_idx] - self.rest_local[:, None, :]
        dx = self.positions[self._nbr_idx] - self.positions[:, None, :]
        A = np.einsum("nki,nkj->nij", dx, dX)
        F = A @ self._grad_pinv
        F = np.where(self._grad_ok[:, None, None], F, np.eye(3))
        dets = np.linalg.det(F)
        if np.any(dets <= 1e-6):
            for idx in np.nonzero(dets <= 1e-6)[0]:
                F[idx] = _positive_det(F[idx])
        return F

    def body_state(self, timestamp: float = 0.0) -> DeformableBodyState:
        return DeformableBodyState(
            node_positions=self.positions.copy(),
            node_reference_positions=self.reference_positions.copy(),
            node_velocities=self.velocities.copy(),
            deformation_gradients=self.deformation_gradients(),
            timestamp=timestamp,
        )

    def snapshot(self) -> dict:
        return {"positions": self.positions.copy(),
                "velocities": self.velocities.copy()}

    def restore(self, snap: dict) -> None:
        self.positions = snap["positions"].copy()
        self.velocities = snap["velocities"].copy()


def _positive_det(F: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Blend a (nearly) inverted gradient toward identity until det > floor."""
    if np.linalg.det(F) > floor:
        return F
    eye = np.eye(3)
    alpha = 0.9
    for _ in range(60):
        blended = alpha * F + (1.0 - alpha) * eye
        if np.linalg.det(blended) > floor:
            return blended
        alpha *= 0.9
    return eye
