import json

import numpy as np
import pytest

from grasplab.errors import SensorFaultError, ValidationError
from grasplab.observation import (
    FeatureScaling,
    ObservationLayout,
    PrivilegedState,
    Proprioception,
    TactileReading,
    build_observation,
    simulate_tactile,
    time_encoding,
)

LAYOUT = ObservationLayout(action_dim=22, history_len=3)


def zero_bundle(step=0, horizon=200, layout=LAYOUT, **priv_overrides):
    priv = PrivilegedState.zeros()
    for k, v in priv_overrides.items():
        setattr(priv, k, v)
    return build_observation(TactileReading.zeros(),
                             Proprioception.zeros(layout.action_dim, layout.history_len),
                             priv, step, horizon, layout)


def test_zero_input_step0():
    b = zero_bundle(step=0)
    assert np.allclose(b.time_encoding, [0.0, 0.0, 1.0])
    sl = LAYOUT.field_slice("time_encoding")
    nonzero = np.nonzero(b.actor_vector)[0]
    # root quaternion w and cos(0) are the only nonzero entries of a zero scene
    rootq_w = LAYOUT.field_slice("root_pose").start + 3
    assert set(nonzero) <= {rootq_w, sl.start + 2}


def test_half_horizon_time_encoding():
    b = zero_bundle(step=100, horizon=200)
    assert b.time_encoding[0] == pytest.approx(0.5)
    assert b.time_encoding[1] == pytest.approx(0.0, abs=1e-12)
    assert b.time_encoding[2] == pytest.approx(-1.0)


def test_time_encoding_unit_circle():
    for step in range(0, 200, 7):
        t = time_encoding(step, 200)
        assert t[1] ** 2 + t[2] ** 2 == pytest.approx(1.0, abs=1e-12)


def test_critic_is_actor_plus_privileged():
    b = zero_bundle()
    assert len(b.critic_vector) == len(b.actor_vector) + LAYOUT.privileged_dim
    assert np.array_equal(b.critic_vector[:len(b.actor_vector)], b.actor_vector)


def test_lengths_constant_across_steps():
    dims = {(len(zero_bundle(step=s).actor_vector),
             len(zero_bundle(step=s).critic_vector)) for s in range(0, 200, 11)}
    assert len(dims) == 1


def test_privileged_perturbation_never_touches_actor():
    rng = np.random.default_rng(0)
    base = zero_bundle()
    for field_name in ("object_rotation", "object_linear_velocity",
                       "object_angular_velocity", "mean_max_principal_strain",
                       "joint_object_distances", "joint_environment_distances"):
        priv = PrivilegedState.zeros()
        current = getattr(priv, field_name)
        if np.isscalar(current) or np.ndim(current) == 0:
            setattr(priv, field_name, float(rng.uniform(0.1, 1.0)))
        else:
            setattr(priv, field_name, np.asarray(current) + rng.uniform(0.1, 1.0, np.shape(current)))
        b = build_observation(TactileReading.zeros(),
                              Proprioception.zeros(22, 3), priv, 0, 200, LAYOUT)
        assert np.array_equal(b.actor_vector, base.actor_vector)
        assert not np.array_equal(b.critic_vector, base.critic_vector)


def test_determinism():
    rng = np.random.default_rng(5)
    tac = TactileReading(rng.normal(size=(11, 3)))
    prop = Proprioception.zeros(22, 3)
    prop.joint_positions = rng.normal(size=16)
    priv = PrivilegedState.zeros()
    a = build_observation(tac, prop, priv, 3, 200, LAYOUT)
    b = build_observation(tac, prop, priv, 3, 200, LAYOUT)
    assert np.array_equal(a.actor_vector, b.actor_vector)
    assert np.array_equal(a.critic_vector, b.critic_vector)


def test_sensor_fault_raises():
    tac = TactileReading.zeros()
    tac.sensor_forces[2, 1] = np.nan
    with pytest.raises(SensorFaultError):
        build_observation(tac, Proprioception.zeros(22, 3), PrivilegedState.zeros(),
                          0, 200, LAYOUT)


def test_step_bounds():
    with pytest.raises(ValidationError):
        zero_bundle(step=200, horizon=200)
    with pytest.raises(ValidationError):
        zero_bundle(step=-1)


def test_tactile_disabled_layout_zeroes_block():
    layout = ObservationLayout(action_dim=22, history_len=3, tactile_enabled=False)
    tac = TactileReading(np.full((11, 3), 2.5))
    b = build_observation(tac, Proprioception.zeros(22, 3), PrivilegedState.zeros(),
                          0, 200, layout)
    assert np.all(b.actor_vector[layout.field_slice("tactile")] == 0.0)
    assert layout.to_dict()["tactile_enabled"] is False


def test_scaling_applies_per_field():
    scaling = FeatureScaling(scales={"tactile": 0.1}, offsets={"tactile": 1.0})
    tac = TactileReading(np.ones((11, 3)))
    b = build_observation(tac, Proprioception.zeros(22, 3), PrivilegedState.zeros(),
                          0, 200, LAYOUT, scaling=scaling)
    assert np.allclose(b.actor_vector[LAYOUT.field_slice("tactile")], 0.0)
    b2 = build_observation(TactileReading(np.full((11, 3), 2.0)),
                           Proprioception.zeros(22, 3), PrivilegedState.zeros(),
                           0, 200, LAYOUT, scaling=scaling)
    assert np.allclose(b2.actor_vector[LAYOUT.field_slice("tactile")], 0.1)


def test_schema_round_trip(tmp_path):
    path = tmp_path / "schema.json"
    LAYOUT.write_schema(path)
    loaded = ObservationLayout.from_dict(json.loads(path.read_text()))
    assert loaded.matches(LAYOUT)
    other = ObservationLayout(action_dim=1, history_len=3)
    assert not loaded.matches(other)


# ---------------------------------------------------------------- tactile sim

def test_simulate_tactile_empty():
    r = simulate_tactile([], noise_scale=0.0)
    assert np.array_equal(r.sensor_forces, np.zeros((11, 3)))


def test_simulate_tactile_pass_through():
    r = simulate_tactile([(3, [0.0, 0.0, 1.0])], noise_scale=0.0)
    expected = np.zeros((11, 3))
    expected[3, 2] = 1.0
    assert np.array_equal(r.sensor_forces, expected)


def test_simulate_tactile_superposition():
    r = simulate_tactile([(4, [1.0, 0.0, 0.0]), (4, [0.0, 2.0, 0.0])], noise_scale=0.0)
    assert np.allclose(r.sensor_forces[4], [1.0, 2.0, 0.0])


def test_simulate_tactile_rotates_into_pad_frame():
    rots = np.stack([np.eye(3)] * 11)
    # pad 2 frame rotated 90 deg about z: world x maps to pad -y
    rots[2] = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    r = simulate_tactile([(2, [1.0, 0.0, 0.0])], noise_scale=0.0, pad_rotations=rots)
    assert np.allclose(r.sensor_forces[2], [0.0, -1.0, 0.0], atol=1e-12)


def test_simulate_tactile_clamps_magnitude():
    r = simulate_tactile([(0, [100.0, 0.0, 0.0])], noise_scale=0.0, max_force=20.0)
    assert np.linalg.norm(r.sensor_forces[0]) == pytest.approx(20.0)


def test_simulate_tactile_noise_deterministic_with_rng():
    a = simulate_tactile([(1, [0, 0, 1])], noise_scale=0.01,
                         rng=np.random.default_rng(9))
    b = simulate_tactile([(1, [0, 0, 1])], noise_scale=0.01,
                         rng=np.random.default_rng(9))
    assert np.array_equal(a.sensor_forces, b.sensor_forces)


def test_simulate_tactile_bad_sensor():
    with pytest.raises(IndexError):
        simulate_tactile([(11, [0, 0, 1])])
