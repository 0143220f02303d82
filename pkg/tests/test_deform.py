import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from grasplab import transforms as tf
from grasplab.deform import (
    DeformableBodyState,
    DeformationSummary,
    StrainMode,
    com_velocity,
    deformation_score,
    estimate_rotation,
    green_lagrange_strain,
    load_node_trajectory,
    mean_max_principal_strain,
    save_node_trajectory,
    select_rotation_mode,
    summarize_deformation,
    symmetric_eigenvalues_3x3,
)
from grasplab.errors import (
    ConfigurationError,
    DegenerateInputError,
    DomainError,
    TraceFormatError,
)


def make_state(pos, ref=None, vel=None, grads=None):
    pos = np.asarray(pos, dtype=float)
    ref = pos.copy() if ref is None else np.asarray(ref, dtype=float)
    vel = np.zeros_like(pos) if vel is None else vel
    grads = np.empty((0, 3, 3)) if grads is None else grads
    return DeformableBodyState(pos, ref, vel, grads)


def random_gradient(rng, scale=0.3):
    while True:
        F = np.eye(3) + scale * rng.normal(size=(3, 3))
        if np.linalg.det(F) > 0.05:
            return F


# ---------------------------------------------------------------- score

def test_score_zero_at_reference():
    pos = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
    assert deformation_score(make_state(pos)) == 0.0


def test_score_zero_under_rigid_translation():
    rng = np.random.default_rng(0)
    ref = rng.normal(size=(12, 3))
    t = np.array([0.3, -0.1, 0.25])
    assert deformation_score(make_state(ref + t, ref=ref)) == pytest.approx(0.0, abs=1e-12)


def test_score_frozen_hand_computed_value():
    # squared displacements {0, 1, 2} m^2 -> population std sqrt(2/3)
    ref = np.zeros((3, 3))
    pos = np.array([[0, 0, 0], [1, 0, 0], [0, 2 ** 0.5, 0]])
    assert deformation_score(make_state(pos, ref=ref)) == pytest.approx(
        0.816496580927726, abs=1e-12)


def test_score_needs_two_nodes():
    with pytest.raises(DegenerateInputError):
        deformation_score(make_state(np.zeros((1, 3))))


# ---------------------------------------------------------------- mode select

@pytest.mark.parametrize("score,expected", [
    (0.005, StrainMode.AVERAGE_ROTATION),
    (0.01, StrainMode.PRINCIPAL_ROTATION),   # boundary inclusive: tau1 <= s < tau2
    (0.05, StrainMode.PRINCIPAL_ROTATION),
    (0.1, StrainMode.RIGID_ROTATION),        # boundary: s >= tau2
    (0.5, StrainMode.RIGID_ROTATION),
    (0.0, StrainMode.AVERAGE_ROTATION),
])
def test_mode_thresholds(score, expected):
    assert select_rotation_mode(score, 0.01, 0.1) is expected


def test_mode_bad_thresholds():
    with pytest.raises(ConfigurationError):
        select_rotation_mode(0.5, 0.2, 0.1)
    with pytest.raises(ConfigurationError):
        select_rotation_mode(0.5, 0.3, 0.3)


@given(st.floats(min_value=0, max_value=1, allow_nan=False))
@settings(max_examples=200, deadline=None)
def test_mode_monotone_step_function(score):
    order = [StrainMode.AVERAGE_ROTATION, StrainMode.PRINCIPAL_ROTATION,
             StrainMode.RIGID_ROTATION]
    m1 = select_rotation_mode(score)
    m2 = select_rotation_mode(score + 1e-3)
    assert order.index(m2) >= order.index(m1)


# ---------------------------------------------------------------- rotation

ASYMMETRIC_CLOUD = np.array([
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, 2.0, 0.0],
    [0.3, 0.4, 1.5],
])


def test_rotation_identity():
    st_ = make_state(ASYMMETRIC_CLOUD)
    q = estimate_rotation(st_, StrainMode.RIGID_ROTATION)
    assert tf.quat_geodesic_distance(q, tf.IDENTITY_QUAT) < 1e-9


def test_rigid_rotation_90deg_about_z():
    R = Rotation.from_euler("z", 90, degrees=True).as_matrix()
    st_ = make_state(ASYMMETRIC_CLOUD @ R.T, ref=ASYMMETRIC_CLOUD)
    q = estimate_rotation(st_, StrainMode.RIGID_ROTATION)
    expected = np.array([np.sqrt(2) / 2, 0.0, 0.0, np.sqrt(2) / 2])
    assert np.allclose(q, expected, atol=1e-6)


def test_rigid_rotation_matches_scipy_kabsch():
    rng = np.random.default_rng(7)
    for _ in range(50):
        cloud = rng.normal(size=(10, 3))
        R = Rotation.random(random_state=rng.integers(2 ** 31))
        moved = cloud @ R.as_matrix().T + rng.normal(size=3)
        q = estimate_rotation(make_state(moved, ref=cloud), StrainMode.RIGID_ROTATION)
        # independent oracle: scipy's Kabsch on centered clouds
        centered_ref = cloud - cloud.mean(axis=0)
        centered_cur = moved - moved.mean(axis=0)
        oracle, _ = Rotation.align_vectors(centered_cur, centered_ref)
        ow = oracle.as_quat()  # xyzw
        q_oracle = np.array([ow[3], ow[0], ow[1], ow[2]])
        assert tf.quat_geodesic_distance(q, q_oracle) < 1e-6


def test_principal_rotation_recovers_rigid_motion():
    rng = np.random.default_rng(3)
    cloud = np.diag([2.0, 1.2, 0.5]) @ rng.normal(size=(3, 30))
    cloud = cloud.T  # anisotropic so principal axes are well separated
    for _ in range(20):
        R = Rotation.random(random_state=rng.integers(2 ** 31)).as_matrix()
        moved = cloud @ R.T + rng.normal(size=3)
        q = estimate_rotation(make_state(moved, ref=cloud), StrainMode.PRINCIPAL_ROTATION)
        assert tf.quat_geodesic_distance(q, tf.quat_from_matrix(R)) < 1e-6


def test_average_rotation_from_gradients():
    rng = np.random.default_rng(11)
    R = Rotation.random(random_state=5).as_matrix()
    grads = np.stack([R for _ in range(8)])
    cloud = rng.normal(size=(8, 3))
    st_ = make_state(cloud @ R.T, ref=cloud, grads=grads)
    q = estimate_rotation(st_, StrainMode.AVERAGE_ROTATION)
    assert tf.quat_geodesic_distance(q, tf.quat_from_matrix(R)) < 1e-9


def test_average_rotation_with_noise_close_to_kabsch_oracle():
    rng = np.random.default_rng(19)
    cloud = rng.normal(size=(20, 3))
    R = Rotation.from_euler("xyz", [20, -35, 50], degrees=True).as_matrix()
    q_true = tf.quat_from_matrix(R)
    # per-node gradients are the true rotation composed with small stretch noise
    grads = []
    for _ in range(20):
        noise = np.eye(3) + 0.01 * rng.normal(size=(3, 3))
        grads.append(R @ noise)
    moved = cloud @ R.T + 0.002 * rng.normal(size=cloud.shape)
    st_ = make_state(moved, ref=cloud, grads=np.stack(grads))
    q = estimate_rotation(st_, StrainMode.AVERAGE_ROTATION)
    assert tf.quat_geodesic_distance(q, q_true) < 0.05


def test_all_modes_agree_on_noise_free_rigid_motion():
    rng = np.random.default_rng(23)
    cloud = np.column_stack([rng.normal(size=12) * s for s in (2.0, 1.1, 0.6)])
    R = Rotation.from_euler("zx", [72, 31], degrees=True).as_matrix()
    grads = np.stack([R for _ in range(12)])
    st_ = make_state(cloud @ R.T + [0.1, 0, 0.2], ref=cloud, grads=grads)
    qs = [estimate_rotation(st_, m) for m in StrainMode]
    for a in qs:
        for b in qs:
            assert tf.quat_geodesic_distance(a, b) < 1e-6


def test_rotation_degenerate_geometry():
    line = np.outer(np.arange(4, dtype=float), [1.0, 0.0, 0.0])
    with pytest.raises(DegenerateInputError):
        estimate_rotation(make_state(line), StrainMode.RIGID_ROTATION)
    with pytest.raises(DegenerateInputError):
        estimate_rotation(make_state(np.zeros((2, 3))), StrainMode.RIGID_ROTATION)


# ---------------------------------------------------------------- com velocity

def test_com_velocity_cases():
    assert np.allclose(com_velocity([1, 2, 3], [1, 2, 3], 0.5), np.zeros(3))
    assert np.allclose(com_velocity([0, 0, 0], [0, 0, 0.1], 0.02), [0, 0, 5.0])
    assert np.allclose(com_velocity([0, 0, 0], [0.01, -0.02, 0], 0.01), [1.0, -2.0, 0])
    with pytest.raises(DomainError):
        com_velocity([0, 0, 0], [1, 0, 0], 0.0)
    with pytest.raises(DomainError):
        com_velocity([0, 0, 0], [1, 0, 0], -0.1)


# ---------------------------------------------------------------- strain

def test_strain_identity_and_rotation():
    res = green_lagrange_strain(np.eye(3))
    assert np.allclose(res.strain_tensor, 0.0)
    assert res.max_principal_strain == 0.0
    R = Rotation.from_euler("xyz", [10, 60, -40], degrees=True).as_matrix()
    res = green_lagrange_strain(R)
    assert np.linalg.norm(res.strain_tensor) < 1e-10


def test_strain_uniaxial_stretch_frozen_value():
    res = green_lagrange_strain(np.diag([1.1, 1.0, 1.0]))
    expected = np.diag([0.5 * (1.1 ** 2 - 1.0), 0.0, 0.0])
    assert np.allclose(res.strain_tensor, expected, atol=1e-15)
    assert res.max_principal_strain == pytest.approx(0.105, abs=1e-12)


def test_strain_matches_brute_force_oracle():
    rng = np.random.default_rng(99)
    for _ in range(300):
        F = random_gradient(rng)
        res = green_lagrange_strain(F)
        # independent oracle: direct formula + LAPACK eigensolver
        E_oracle = 0.5 * (F.T @ F - np.eye(3))
        eig_oracle = np.linalg.eigvalsh(E_oracle)[::-1]
        assert np.linalg.norm(res.strain_tensor - E_oracle) < 1e-10
        assert np.max(np.abs(res.eigenvalues - eig_oracle)) < 1e-10
        assert res.max_principal_strain == res.eigenvalues[0]


def test_strain_objectivity():
    rng = np.random.default_rng(5)
    for _ in range(100):
        F = random_gradient(rng)
        R = tf.quat_to_matrix(tf.random_quaternion(rng))
        E1 = green_lagrange_strain(F).strain_tensor
        E2 = green_lagrange_strain(R @ F).strain_tensor
        assert np.linalg.norm(E1 - E2) < 1e-9


def test_strain_tensor_exactly_symmetric():
    rng = np.random.default_rng(1)
    for _ in range(50):
        E = green_lagrange_strain(random_gradient(rng)).strain_tensor
        assert np.array_equal(E, E.T)


def test_strain_rejects_non_finite():
    F = np.eye(3)
    F[0, 0] = np.nan
    with pytest.raises(DomainError):
        green_lagrange_strain(F)


def test_jacobi_eigenvalues_match_lapack():
    rng = np.random.default_rng(42)
    for _ in range(200):
        A = rng.normal(size=(3, 3))
        S = 0.5 * (A + A.T)
        ours = symmetric_eigenvalues_3x3(S)
        lapack = np.linalg.eigvalsh(S)[::-1]
        assert np.max(np.abs(ours - lapack)) < 1e-10


# ---------------------------------------------------------------- mean strain

def test_mean_strain_identity_gradients():
    grads = np.stack([np.eye(3)] * 4)
    st_ = make_state(np.zeros((4, 3)), grads=grads)
    assert mean_max_principal_strain(st_) == 0.0


def test_mean_strain_two_known_nodes():
    # uniaxial stretches chosen so per-node eps_max are 0.1 and 0.3
    f1 = np.diag([np.sqrt(1 + 2 * 0.1), 1.0, 1.0])
    f2 = np.diag([np.sqrt(1 + 2 * 0.3), 1.0, 1.0])
    st_ = make_state(np.zeros((2, 3)), grads=np.stack([f1, f2]))
    assert mean_max_principal_strain(st_) == pytest.approx(0.2, abs=1e-12)


def test_mean_strain_matches_brute_force_average():
    rng = np.random.default_rng(77)
    grads = np.stack([random_gradient(rng, scale=0.05) for _ in range(25)])
    st_ = make_state(np.zeros((25, 3)), grads=grads)
    oracle = np.mean([np.linalg.eigvalsh(0.5 * (F.T @ F - np.eye(3)))[-1]
                      for F in grads])
    assert mean_max_principal_strain(st_) == pytest.approx(oracle, abs=1e-10)


def test_mean_strain_requires_gradients():
    with pytest.raises(DegenerateInputError):
        mean_max_principal_strain(make_state(np.zeros((3, 3))))


# ---------------------------------------------------------------- summary

def test_summary_consistency_checks():
    rng = np.random.default_rng(4)
    cloud = rng.normal(size=(10, 3)) * [1.5, 1.0, 0.4]
    grads = np.stack([np.eye(3)] * 10)
    st_ = make_state(cloud + 1e-4 * rng.normal(size=cloud.shape), ref=cloud, grads=grads)
    summary = summarize_deformation(st_, com_prev=cloud.mean(axis=0), dt=1 / 60)
    assert summary.strain_mode is StrainMode.AVERAGE_ROTATION
    assert abs(np.linalg.norm(summary.rotation) - 1.0) < 1e-9
    with pytest.raises(DomainError):
        DeformationSummary(deformation_score=0.5, rotation=[1, 0, 0, 0],
                           com_velocity=np.zeros(3), mean_max_principal_strain=0.0,
                           strain_mode=StrainMode.AVERAGE_ROTATION)


def test_state_rejects_inverted_gradients():
    with pytest.raises(DegenerateInputError):
        make_state(np.zeros((2, 3)), grads=np.stack([np.diag([-1.0, 1.0, 1.0])]))


def test_state_rejects_mismatched_lengths():
    with pytest.raises(DegenerateInputError):
        DeformableBodyState(np.zeros((3, 3)), np.zeros((2, 3)), np.zeros((3, 3)),
                            np.empty((0, 3, 3)))


# ---------------------------------------------------------------- trajectory IO

def test_trajectory_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    ref = rng.normal(size=(6, 3))
    states = []
    for t in range(4):
        states.append(DeformableBodyState(
            node_positions=ref + 0.01 * t,
            node_reference_positions=ref,
            node_velocities=rng.normal(size=(6, 3)),
            deformation_gradients=np.stack([random_gradient(rng, 0.05)
                                            for _ in range(6)]),
            timestamp=float(t),
        ))
    path = tmp_path / "traj.txt"
    save_node_trajectory(path, states)
    loaded = load_node_trajectory(path)
    assert len(loaded) == 4
    for a, b in zip(states, loaded):
        assert np.allclose(a.node_positions, b.node_positions, atol=0, rtol=0)
        assert np.allclose(a.node_velocities, b.node_velocities, atol=0, rtol=0)
        assert np.allclose(a.deformation_gradients, b.deformation_gradients,
                           atol=0, rtol=0)
        assert np.allclose(b.node_reference_positions, ref, atol=0, rtol=0)


def test_trajectory_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("something else entirely\n")
    with pytest.raises(TraceFormatError):
        load_node_trajectory(path)
