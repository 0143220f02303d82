"""Deformable-object kinematics: deformation scoring, adaptive rotation
estimation, center-of-mass velocity, and Green-Lagrange strain.

All quantities derive from discretized node data (positions, velocities,
per-node deformation gradients). Functions are pure and hold no state, so
they are safe from any number of concurrent workers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, DomainError, TraceFormatError
from .transforms import (
    chordal_mean_rotation,
    polar_rotation,
    project_rotation,
    quat_from_matrix,
)

DEFAULT_TAU1 = 0.01
DEFAULT_TAU2 = 0.1


class StrainMode(enum.Enum):
    """Rotation-estimation strategy, selected by deformation score."""

    AVERAGE_ROTATION = "average_rotation"
    PRINCIPAL_ROTATION = "principal_rotation"
    RIGID_ROTATION = "rigid_rotation"


@dataclass
class DeformableBodyState:
    """Node snapshot of a discretized soft body at one instant.

    ``deformation_gradients`` may cover fewer nodes than ``node_count``
    (they exist only at evaluation nodes); strain operations require at
    least one.
    """

    node_positions: np.ndarray          # (N, 3) current positions [m]
    node_reference_positions: np.ndarray  # (N, 3) rest positions [m]
    node_velocities: np.ndarray         # (N, 3) [m/s]
    deformation_gradients: np.ndarray   # (M, 3, 3), det > 0
    timestamp: float = 0.0

    def __post_init__(self):
        self.node_positions = np.atleast_2d(np.asarray(self.node_positions, dtype=float))
        self.node_reference_positions = np.atleast_2d(
            np.asarray(self.node_reference_positions, dtype=float))
        self.node_velocities = np.atleast_2d(np.asarray(self.node_velocities, dtype=float))
        self.deformation_gradients = np.asarray(self.deformation_gradients, dtype=float)
        if self.deformation_gradients.size == 0:
            self.deformation_gradients = np.zeros((0, 3, 3))
        n = len(self.node_positions)
        if len(self.node_reference_positions) != n or len(self.node_velocities) != n:
            raise DegenerateInputError(
                "node position/reference/velocity arrays must have identical length")
        if self.deformation_gradients.ndim != 3 or self.deformation_gradients.shape[1:] != (3, 3):
            raise DegenerateInputError("deformation_gradients must have shape (M, 3, 3)")
        dets = np.linalg.det(self.deformation_gradients) if len(self.deformation_gradients) else []
        if np.any(np.asarray(dets) <= 0.0):
            raise DegenerateInputError("deformation gradients must have det > 0 (no inversion)")

    @property
    def node_count(self) -> int:
        return len(self.node_positions)

    def center_of_mass(self) -> np.ndarray:
        """Equal-mass centroid of the node cloud."""
        return self.node_positions.mean(axis=0)


@dataclass
class StrainResult:
    """Green-Lagrange strain tensor with its spectral summary."""

    strain_tensor: np.ndarray   # symmetric (3, 3)
    eigenvalues: np.ndarray     # (3,) sorted descending
    max_principal_strain: float

    def __post_init__(self):
        self.strain_tensor = np.asarray(self.strain_tensor, dtype=float)
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)


@dataclass
class DeformationSummary:
    """Aggregate privileged quantities for one body at one control step."""

    deformation_score: float
    rotation: np.ndarray        # unit quaternion [w, x, y, z], w >= 0
    com_velocity: np.ndarray    # (3,) [m/s]
    mean_max_principal_strain: float
    strain_mode: StrainMode
    thresholds: tuple = field(default=(DEFAULT_TAU1, DEFAULT_TAU2))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float)
        if abs(np.linalg.norm(self.rotation) - 1.0) > 1e-9:
            raise DomainError("rotation quaternion must have unit norm within 1e-9")
        expected = select_rotation_mode(self.deformation_score, *self.thresholds)
        if expected is not self.strain_mode:
            raise DomainError(
                f"strain_mode {self.strain_mode} inconsistent with score "
                f"{self.deformation_score} and thresholds {self.thresholds}")


def deformation_score(state: DeformableBodyState) -> float:
    """Population standard deviation of squared node displacements.

    The score is Std({||p_i - p_i_ref||^2}); squared distances make a
    rigid translation score exactly zero while shape change does not.
    """
    if state.node_count < 2:
        raise DegenerateInputError("deformation score needs at least 2 nodes")
    sq = np.sum((state.node_positions - state.node_reference_positions) ** 2, axis=1)
    return float(np.std(sq))


def select_rotation_mode(score: float,
                         tau1: float = DEFAULT_TAU1,
                         tau2: float = DEFAULT_TAU2) -> StrainMode:
    """Pick the rotation strategy for a given deformation score.

    Below tau1 the body is nearly undeformed and per-node rotations are
    trustworthy; between tau1 and tau2 only the dominant axes are; at or
    above tau2 a whole-cloud rigid fit is the stable choice.
    """
    if not (0.0 <= tau1 < tau2):
        raise ConfigurationError(f"need 0 <= tau1 < tau2, got tau1={tau1}, tau2={tau2}")
    if score < tau1:
        return StrainMode.AVERAGE_ROTATION
    if score < tau2:
        return StrainMode.PRINCIPAL_ROTATION
    return StrainMode.RIGID_ROTATION


def _kabsch_rotation(ref: np.ndarray, cur: np.ndarray) -> np.ndarray:
    """Least-squares rotation R minimizing ||R · ref_centered - cur_centered||."""
    a = ref - ref.mean(axis=0)
    b = cur - cur.mean(axis=0)
    return project_rotation(b.T @ a)


def _principal_axes_rotation(ref: np.ndarray, cur: np.ndarray) -> np.ndarray:
    """Rotation aligning the top-2 principal axes of ref onto those of cur.

    Axis signs are disambiguated by per-node coordinate correlation (the
    clouds are corresponded), and the third axis completes a right-handed
    frame. Falls back to the rigid fit when the spectrum is degenerate.
    """
    a = ref - ref.mean(axis=0)
    b = cur - cur.mean(axis=0)
    _, sa, va = np.linalg.svd(a, full_matrices=False)
    _, sb, vb = np.linalg.svd(b, full_matrices=False)
    # eigengap guards: equal principal moments make the axes arbitrary
    if sa[0] < 1e-12 or sb[0] < 1e-12:
        raise DegenerateInputError("point cloud has no spatial extent")
    gap_a = (sa[0] - sa[1], sa[1] - sa[2])
    gap_b = (sb[0] - sb[1], sb[1] - sb[2])
    if min(gap_a[0], gap_a[1], gap_b[0], gap_b[1]) < 1e-9 * sa[0]:
        return _kabsch_rotation(ref, cur)

    axes_ref = []
    axes_cur = []
    for k in range(2):
        e_ref = va[k]
        e_cur = vb[k]
        corr = float((a @ e_ref) @ (b @ e_cur))
        if abs(corr) < 1e-12:
            return _kabsch_rotation(ref, cur)
        if corr < 0.0:
            e_cur = -e_cur
        axes_ref.append(e_ref)
        axes_cur.append(e_cur)

    def frame(e1, e2):
        e2 = e2 - np.dot(e2, e1) * e1
        e2 /= np.linalg.norm(e2)
        return np.column_stack([e1, e2, np.cross(e1, e2)])

    return frame(*axes_cur) @ frame(*axes_ref).T


def _average_node_rotation(state: DeformableBodyState) -> np.ndarray:
    """Chordal mean of per-node rotations from polar-decomposed gradients."""
    if len(state.deformation_gradients) == 0:
        raise DegenerateInputError(
            "average-rotation mode needs per-node deformation gradients")
    node_rotations = np.stack([polar_rotation(F) for F in state.deformation_gradients])
    return chordal_mean_rotation(node_rotations)


def estimate_rotation(state: DeformableBodyState, mode: StrainMode) -> np.ndarray:
    """Global body rotation relative to the reference configuration.

    Returns a unit quaternion with canonical sign (w >= 0).
    """
    if state.node_count < 3:
        raise DegenerateInputError("rotation estimation needs at least 3 nodes")
    ref = state.node_reference_positions
    cur = state.node_positions
    centered = ref - ref.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-10) < 2:
        raise DegenerateInputError("reference nodes are collinear or coincident")

    if mode is StrainMode.RIGID_ROTATION:
        R = _kabsch_rotation(ref, cur)
    elif mode is StrainMode.PRINCIPAL_ROTATION:
        R = _principal_axes_rotation(ref, cur)
    elif mode is StrainMode.AVERAGE_ROTATION:
        R = _average_node_rotation(state)
    else:
        raise ConfigurationError(f"unknown strain mode: {mode!r}")
    return quat_from_matrix(R)


def com_velocity(com_prev: np.ndarray, com_next: np.ndarray, dt: float) -> np.ndarray:
    """Finite-difference center-of-mass velocity over one interval."""
    if not dt > 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    return (np.asarray(com_next, dtype=float) - np.asarray(com_prev, dtype=float)) / dt


def symmetric_eigenvalues_3x3(S: np.ndarray) -> np.ndarray:
    """Eigenvalues of symmetric 3x3 matrices, closed form, sorted descending.

    Uses the trigonometric solution of the characteristic cubic (deflated
    through the trace), which is deterministic across platforms and
    vectorizes over a leading batch dimension: input (..., 3, 3) yields
    output (..., 3).
    """
    A = np.asarray(S, dtype=float)
    single = A.ndim == 2
    if single:
        A = A[None]
    q = np.trace(A, axis1=-2, axis2=-1) / 3.0
    B = A - q[..., None, None] * np.eye(3)
    p2 = np.einsum("...ij,...ij->...", B, B) / 6.0
    p = np.sqrt(np.maximum(p2, 0.0))
    detB = np.linalg.det(B)
    # r = det(B/p)/2 clamped into [-1, 1] to absorb rounding
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(p > 0.0, detB / np.maximum(p, 1e-300) ** 3 / 2.0, 0.0)
    r = np.clip(r, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    two_p = 2.0 * p
    eig0 = q + two_p * np.cos(phi)
    eig2 = q + two_p * np.cos(phi + 2.0 * np.pi / 3.0)
    eig1 = 3.0 * q - eig0 - eig2
    out = np.stack([eig0, eig1, eig2], axis=-1)
    return out[0] if single else out


def green_lagrange_strain(F: np.ndarray) -> StrainResult:
    """Green-Lagrange strain E = 1/2 (F^T F - I) with spectral summary.

    E is invariant to rigid rotation of F, making it a frame-independent
    finite-strain measure; the max principal strain is its largest
    eigenvalue.
    """
    F = np.asarray(F, dtype=float)
    if F.shape != (3, 3):
        raise DomainError(f"deformation gradient must be 3x3, got {F.shape}")
    if not np.all(np.isfinite(F)):
        raise DomainError("deformation gradient has non-finite entries")
    E = 0.5 * (F.T @ F - np.eye(3))
    E = 0.5 * (E + E.T)  # exact symmetry despite rounding
    eig = symmetric_eigenvalues_3x3(E)
    return StrainResult(strain_tensor=E, eigenvalues=eig,
                        max_principal_strain=float(eig[0]))


def max_principal_strains(gradients: np.ndarray) -> np.ndarray:
    """Per-node max principal Green-Lagrange strain for a gradient batch."""
    F = np.asarray(gradients, dtype=float)
    E = 0.5 * (np.einsum("...ji,...jk->...ik", F, F) - np.eye(3))
    E = 0.5 * (E + np.swapaxes(E, -1, -2))
    return symmetric_eigenvalues_3x3(E)[..., 0]


def mean_max_principal_strain(state: DeformableBodyState) -> float:
    """Mean over evaluation nodes of the per-node max principal strain.

    The raw mean is reported: a purely compressive body can legitimately
    yield a negative value (no clamping to zero).
    """
    if len(state.deformation_gradients) == 0:
        raise DegenerateInputError("no deformation gradients present")
    return float(np.mean(max_principal_strains(state.deformation_gradients)))


def summarize_deformation(state: DeformableBodyState,
                          com_prev: np.ndarray,
                          dt: float,
                          tau1: float = DEFAULT_TAU1,
                          tau2: float = DEFAULT_TAU2) -> DeformationSummary:
    """One-call privileged summary: score, adaptive rotation, CoM velocity,
    and mean max principal strain."""
    score = deformation_score(state)
    mode = select_rotation_mode(score, tau1, tau2)
    rotation = estimate_rotation(state, mode)
    velocity = com_velocity(com_prev, state.center_of_mass(), dt)
    strain = mean_max_principal_strain(state)
    return DeformationSummary(
        deformation_score=score,
        rotation=rotation,
        com_velocity=velocity,
        mean_max_principal_strain=strain,
        strain_mode=mode,
        thresholds=(tau1, tau2),
    )


# ---------------------------------------------------------------------------
# Node-trajectory text format (offline ingestion for the oracle test suite)
#
#   line 1: "node-trajectory v1 nodes=<N>"
#   line 2: "ref" followed by 3N floats (reference positions, row-major)
#   then one line per timestep:
#     <step_index> <3N floats positions> <3N floats velocities> <9N floats
#     row-major deformation gradients>
# ---------------------------------------------------------------------------

TRAJECTORY_MAGIC = "node-trajectory"
TRAJECTORY_VERSION = 1


def save_node_trajectory(path, states: list[DeformableBodyState]) -> None:
    """Write a line-oriented trajectory file (see module tail comment)."""
    if not states:
        raise DegenerateInputError("cannot save an empty trajectory")
    n = states[0].node_count
    with open(path, "w") as fh:
        fh.write(f"{TRAJECTORY_MAGIC} v{TRAJECTORY_VERSION} nodes={n}\n")
        ref = " ".join(f"{v:.17g}" for v in states[0].node_reference_positions.ravel())
        fh.write(f"ref {ref}\n")
        for i, st in enumerate(states):
            if st.node_count != n:
                raise DegenerateInputError("all states must share node_count")
            row = np.concatenate([
                st.node_positions.ravel(),
                st.node_velocities.ravel(),
                st.deformation_gradients.ravel(),
            ])
            fh.write(f"{i} " + " ".join(f"{v:.17g}" for v in row) + "\n")


def load_node_trajectory(path) -> list[DeformableBodyState]:
    """Read states from a node-trajectory file written by save_node_trajectory."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) < 3 or header[0] != TRAJECTORY_MAGIC:
            raise TraceFormatError(f"not a node-trajectory file: {path}")
        if header[1] != f"v{TRAJECTORY_VERSION}":
            raise TraceFormatError(f"unsupported trajectory version: {header[1]}")
        n = int(header[2].split("=")[1])
        ref_line = fh.readline().split()
        if not ref_line or ref_line[0] != "ref":
            raise TraceFormatError("missing reference-position record")
        ref = np.array(ref_line[1:], dtype=float).reshape(n, 3)
        states = []
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            row = np.array(parts[1:], dtype=float)
            pos = row[: 3 * n].reshape(n, 3)
            vel = row[3 * n: 6 * n].reshape(n, 3)
            grads = row[6 * n:].reshape(-1, 3, 3)
            states.append(DeformableBodyState(
                node_positions=pos,
                node_reference_positions=ref,
                node_velocities=vel,
                deformation_gradients=grads,
                timestamp=float(parts[0]),
            ))
    return states

