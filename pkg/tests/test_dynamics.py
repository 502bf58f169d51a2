import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from octorl.dynamics import (GRAVITY, InvalidInputError, KinematicState, VehicleParams, WindField,
                             Wrench, allocate, calibrate_lateral_force, dynamics_step,
                             max_lateral_accel, mixer_matrix, rotation_matrix, wrap_angle)

P = VehicleParams()
finite = st.floats(-1.0, 1.0, allow_nan=False)


def hover_speeds(params=P):
    return allocate(Wrench(params.hover_thrust), params)


def test_mixer_rows_by_explicit_sum():
    # each row written out rotor by rotor
    M = mixer_matrix(P)
    for i in range(8):
        a = i * math.pi / 4
        assert M[0, i] == pytest.approx(P.k_f)
        assert M[1, i] == pytest.approx(-P.k_f * P.arm_length * math.sin(a))
        assert M[2, i] == pytest.approx(P.k_f * P.arm_length * math.cos(a))
        assert M[3, i] == pytest.approx(P.k_m * (1 if i % 2 == 0 else -1) * P.spin_directions[0])
    assert P.spin_directions.sum() == 0


def test_point_mass_inertia():
    m, L = P.rotor_mass, P.arm_length
    # sum over arms of m (L sin a)^2 = 4 m L^2 for eight arms
    assert P.inertia[0, 0] == pytest.approx(4 * m * L * L)
    assert P.inertia[2, 2] == pytest.approx(8 * m * L * L)


@given(st.floats(0.2, 1.8), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(-0.05, 0.05))
def test_allocation_round_trip(thrust_frac, tx, ty, tz):
    w = Wrench(thrust_frac * P.hover_thrust, np.array([tx, ty, tz]))
    s = allocate(w, P)
    back = P.mixer @ (s * s)
    np.testing.assert_allclose(back, w.as_vector(), rtol=1e-6, atol=1e-9)


def test_allocation_saturates_and_clips():
    s = allocate(Wrench(10 * P.max_thrust), P)
    assert np.all(s <= P.max_rotor_speed)
    s = allocate(Wrench(0.0, np.array([50.0, 0, 0])), P)
    assert np.all(s >= 0)


def test_allocate_rejects_nan():
    with pytest.raises(InvalidInputError):
        allocate(Wrench(float("nan")), P)


def test_hover_is_a_fixed_point():
    s = KinematicState()
    speeds = hover_speeds()
    for _ in range(2000):
        s = dynamics_step(s, speeds, WindField(), P, 0.01)
    assert np.max(np.abs(s.position)) < 1e-6


def test_free_fall_first_step():
    s = dynamics_step(KinematicState(), np.zeros(8), WindField(), P, 0.01)
    assert s.velocity[2] == GRAVITY * 0.01
    assert s.velocity[0] == 0 and s.velocity[1] == 0


def test_wind_first_step_acceleration():
    s = dynamics_step(KinematicState(), hover_speeds(), WindField.from_heading(5.0, 90.0), P, 0.01)
    accel = s.nav_velocity() / 0.01
    assert accel[1] == pytest.approx(5.0 / 10.66, abs=5e-5)
    assert accel[1] == pytest.approx(0.4690, abs=5e-5)
    assert abs(accel[0]) < 1e-12


def test_wind_heading_convention():
    w = WindField.from_heading(5, 0)
    np.testing.assert_allclose(w.force, [5, 0], atol=1e-12)
    w = WindField.from_heading(5, 90)
    np.testing.assert_allclose(w.force, [0, 5], atol=1e-12)
    assert w.heading_deg == pytest.approx(90)
    with pytest.raises(InvalidInputError):
        WindField.from_heading(-1, 0)


def test_rejects_out_of_range_speeds_and_nan_state():
    with pytest.raises(InvalidInputError):
        dynamics_step(KinematicState(), np.full(8, P.max_rotor_speed * 2), WindField(), P, 0.01)
    with pytest.raises(InvalidInputError):
        dynamics_step(KinematicState(), np.full(8, -1.0), WindField(), P, 0.01)
    bad = KinematicState()
    bad.position[0] = np.nan
    with pytest.raises(InvalidInputError):
        dynamics_step(bad, hover_speeds(), WindField(), P, 0.01)


@given(finite, finite, finite)
def test_rotation_is_orthonormal(r, p, y):
    R = rotation_matrix(r, p, y)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0)


def test_roll_torque_spins_up_roll_rate():
    w = Wrench(P.hover_thrust, np.array([0.5, 0.0, 0.0]))
    s = dynamics_step(KinematicState(), allocate(w, P), WindField(), P, 0.01)
    assert s.angular_rate[0] == pytest.approx(0.5 / P.inertia[0, 0] * 0.01, rel=1e-6)


def test_tilted_thrust_accelerates_sideways():
    # positive roll (right wing down) pushes toward +y
    s = KinematicState(attitude=np.array([0.1, 0.0, 0.0]))
    s2 = dynamics_step(s, hover_speeds(), WindField(), P, 0.01)
    assert s2.nav_velocity()[1] > 0


@given(st.floats(-20, 20))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi <= w < math.pi
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_state_vector_round_trip():
    x = np.arange(12.0)
    assert np.array_equal(KinematicState.from_vector(x).as_vector(), x)
    with pytest.raises(ValueError):
        KinematicState.from_vector(np.zeros(11))


def test_calibration_hits_reference_force():
    c = calibrate_lateral_force(P)
    assert c.max_thrust * math.sin(math.pi / 12) == pytest.approx(26.65, rel=1e-12)
    # default airframe keeps enough thrust to hover and climb
    assert P.max_thrust == pytest.approx(2 * P.hover_thrust)
    assert max_lateral_accel(P, math.pi / 12) > 0


def test_params_round_trip_and_validation():
    assert VehicleParams.from_dict(P.to_dict()).to_dict() == P.to_dict()
    with pytest.raises(ValueError):
        VehicleParams(mass=-1)


@settings(max_examples=30)
@given(st.lists(st.floats(0, 1), min_size=8, max_size=8))
def test_step_stays_finite(fracs):
    s = dynamics_step(KinematicState(), np.array(fracs) * P.max_rotor_speed, WindField(), P, 0.01)
    assert s.is_finite()
