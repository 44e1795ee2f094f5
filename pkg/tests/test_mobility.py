import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uavlora import mobility as mob

P = mob.MobilityParams()


def test_defaults():
    assert (P.memory, P.randomness, P.dt, P.v_max, P.mean_speed) == (0.85, 0.5, 0.5, 1.0, 0.005)


def test_velocity_update_hand_computed():
    kin = mob.EdKinematics(np.zeros((1, 2)), np.array([[0.2, -0.1]]), np.array([[0.005, 0.0]]))
    noise = np.array([[0.3, 0.4]])
    v = mob.step_velocity(kin, P, noise)
    s = 0.5 * np.sqrt(1 - 0.85**2)
    np.testing.assert_allclose(v, [[0.85 * 0.2 + 0.15 * 0.005 + s * 0.3, 0.85 * -0.1 + s * 0.4]])


def test_clamp_keeps_direction():
    v = mob.clamp_speed(np.array([[3.0, 4.0], [0.3, 0.4], [0.0, 0.0]]), 1.0)
    np.testing.assert_allclose(v, [[0.6, 0.8], [0.3, 0.4], [0.0, 0.0]])


def test_reflect_mirrors_and_negates():
    pos, vel = mob.reflect(np.array([[-2.0, 1003.0]]), np.array([[-1.0, 2.0]]), 1000.0)
    np.testing.assert_allclose(pos, [[2.0, 997.0]])
    np.testing.assert_allclose(vel, [[1.0, -2.0]])


@settings(max_examples=200, deadline=None)
@given(st.floats(-5000, 5000), st.floats(-5000, 5000))
def test_reflect_lands_in_box(x, y):
    pos, _ = mob.reflect(np.array([[x, y]]), np.array([[1.0, 1.0]]), 1000.0)
    assert np.all((pos >= 0) & (pos <= 1000))


def test_resample_mean():
    kin = mob.EdKinematics(np.zeros((2, 2)), np.zeros((2, 2)), np.ones((2, 2)))
    fresh = np.full((2, 2), 7.0)
    out = mob.maybe_resample_mean(kin, P, np.array([0.005, 0.5]), fresh)
    np.testing.assert_allclose(out.mean_velocity, [[7, 7], [1, 1]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_advance_invariants(seed):
    rng = np.random.default_rng(seed)
    kin = mob.initial_kinematics(20, P, rng)
    for _ in range(50):
        kin = mob.advance(kin, P, rng)
        assert np.all((kin.position >= 0) & (kin.position <= P.area_side))
        assert np.all(np.linalg.norm(kin.velocity, axis=1) <= P.v_max + 1e-12)


def test_initial_mean_speed():
    kin = mob.initial_kinematics(50, P, np.random.default_rng(1))
    np.testing.assert_allclose(np.linalg.norm(kin.mean_velocity, axis=1), 0.005)


def test_advance_deterministic():
    a = mob.advance(mob.initial_kinematics(5, P, np.random.default_rng(3)), P, np.random.default_rng(4))
    b = mob.advance(mob.initial_kinematics(5, P, np.random.default_rng(3)), P, np.random.default_rng(4))
    np.testing.assert_array_equal(a.position, b.position)


def test_validate_rejects_bad_memory():
    with pytest.raises(ValueError):
        mob.MobilityParams(memory=1.5).validate()


def test_step_position_reflection_example():
    kin = mob.EdKinematics(np.array([[999.9, 500.0]]), np.array([[1.0, 0.0]]), np.zeros((1, 2)))
    out = mob.step_position(kin, P)
    np.testing.assert_allclose(out.position, [[999.6, 500.0]])
    np.testing.assert_allclose(out.velocity, [[-1.0, 0.0]])


def test_full_memory_keeps_velocity():
    params = mob.MobilityParams(memory=1.0)
    kin = mob.EdKinematics(np.full((3, 2), 500.0), np.array([[0.1, 0.2], [0.0, -0.3], [0.5, 0.5]]),
                           np.ones((3, 2)))
    v = mob.step_velocity(kin, params, np.random.default_rng(0).normal(size=(3, 2)))
    np.testing.assert_array_equal(v, kin.velocity)


def test_resample_extremes():
    kin = mob.EdKinematics(np.zeros((1, 2)), np.zeros((1, 2)), np.ones((1, 2)))
    never = mob.maybe_resample_mean(kin, mob.MobilityParams(resample_prob=0.0), np.array([0.0]), np.zeros((1, 2)))
    np.testing.assert_array_equal(never.mean_velocity, [[1, 1]])
    always = mob.maybe_resample_mean(kin, mob.MobilityParams(resample_prob=1.0), np.array([0.99]),
                                     np.array([[0.2, 0.1]]))
    np.testing.assert_array_equal(always.mean_velocity, [[0.2, 0.1]])
