import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from octorl.control import (CascadeController, CascadeGains, CascadeState, InvalidConfigError,
                            PidGains, PidState, cascade_step, gain_names, leash, pid_step,
                            sqrt_scale)
from octorl.dynamics import KinematicState, VehicleParams, WindField, allocate, dynamics_step

P = VehicleParams()
pos = st.floats(0.01, 50.0)


def sqrt_oracle(e, kp, acc, dt):
    """Piecewise law written out independently."""
    if e == 0:
        return 0.0
    s = 1.0 if e > 0 else -1.0
    a = abs(e)
    if kp == 0:
        v = math.sqrt(2 * acc * a)
    elif a <= acc / kp ** 2:
        v = kp * a
    else:
        v = math.sqrt(2 * acc * (a - acc / kp ** 2 / 2))
    return s * min(v, a / dt)


def test_sqrt_scale_examples():
    assert sqrt_scale(0.0, 3.0, 2.0, 0.1) == 0.0
    assert sqrt_scale(0.5, 2.0, 4.0, 0.1) == pytest.approx(1.0)
    assert sqrt_scale(10.0, 2.0, 4.0, 0.01) == pytest.approx(math.sqrt(76), abs=1e-12)
    assert sqrt_scale(-10.0, 2.0, 4.0, 0.01) == pytest.approx(-8.7178, abs=1e-4)
    with pytest.raises(InvalidConfigError):
        sqrt_scale(1.0, 1.0, 0.0, 0.1)


@given(st.floats(-100, 100), st.just(0.0) | st.floats(1e-3, 50), pos, st.floats(0.001, 1.0))
def test_sqrt_scale_matches_oracle_and_is_odd(e, kp, acc, dt):
    assert sqrt_scale(e, kp, acc, dt) == pytest.approx(sqrt_oracle(e, kp, acc, dt), rel=1e-12, abs=1e-12)
    assert sqrt_scale(-e, kp, acc, dt) == -sqrt_scale(e, kp, acc, dt)


@given(st.floats(0.1, 50), pos)
def test_sqrt_scale_continuous_at_boundary(kp, acc):
    L = acc / kp ** 2
    left = sqrt_scale(L * (1 - 1e-13), kp, acc, 1e-9)
    right = sqrt_scale(L * (1 + 1e-13), kp, acc, 1e-9)
    assert abs(left - right) < 1e-9 * max(1.0, abs(left))


def test_leash_examples():
    assert leash(2.0, 4.0, 0.0) == pytest.approx(0.5)
    assert leash(2.0, 4.0, 3.0) == pytest.approx(1.625)
    assert leash(0.0, 4.0, 1.0) is None


@given(st.floats(0.01, 50), pos, st.floats(0, 10), st.floats(0, 10))
def test_leash_monotone_in_speed(kp, acc, s1, s2):
    lo, hi = sorted((s1, s2))
    assert leash(kp, acc, lo) <= leash(kp, acc, hi)


def test_pid_examples():
    g = PidGains(0.0, 0.0, 0.0, output_limit=100)
    s = PidState()
    for _ in range(5):
        out, s = pid_step(g, s, 0.0, 0.1)
        assert out == 0
    out, _ = pid_step(PidGains(1, 0, 0, output_limit=100), PidState(), 2.0, 0.1)
    assert out == 2.0
    g = PidGains(0, 1, 0, output_limit=100, integral_limit=100)
    o1, s = pid_step(g, PidState(), 2.0, 0.1)
    o2, s = pid_step(g, s, 2.0, 0.1)
    assert (o1, o2) == (pytest.approx(0.2), pytest.approx(0.4))


def test_pid_first_derivative_is_zero_then_acts():
    g = PidGains(0, 0, 1, output_limit=100)
    o1, s = pid_step(g, PidState(), 1.0, 0.1)
    o2, _ = pid_step(g, s, 2.0, 0.1)
    assert o1 == 0 and o2 == pytest.approx(10.0)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=50), st.floats(0.01, 1.0))
def test_integral_clamp(errors, dt):
    g = PidGains(1, 1, 0, output_limit=5.0)
    s = PidState()
    for e in errors:
        out, s = pid_step(g, s, e, dt)
        assert abs(s.integral) <= g.integral_limit + 1e-12
        assert abs(out) <= 5.0 + 1e-12
    assert g.integral_limit == pytest.approx(0.5)


def test_vector_clamp_by_norm():
    g = PidGains(10, 0, 0, output_limit=3.0)
    out, _ = pid_step(g, PidState(), np.array([3.0, 4.0]), 0.1)
    assert np.linalg.norm(out) == pytest.approx(3.0)
    np.testing.assert_allclose(out / np.linalg.norm(out), [0.6, 0.8])


def test_bad_gains_rejected():
    with pytest.raises(InvalidConfigError):
        PidGains(-1, 0, 0)
    with pytest.raises(InvalidConfigError):
        CascadeGains(rate_max_acc=0)


def test_zero_error_gives_hover_wrench():
    w, _ = cascade_step(CascadeGains(), CascadeState(), np.zeros(3), KinematicState(), P, 0.01, 0)
    assert w.thrust_z == pytest.approx(P.hover_thrust)
    assert np.all(w.torques == 0)


def test_far_reference_respects_envelope():
    g = CascadeGains()
    w, s = cascade_step(g, CascadeState(), np.array([20.0, 0, 0]), KinematicState(), P, 0.01, 0)
    assert np.linalg.norm(s.velocity_ref) <= 3.0 + 1e-12
    assert s.tilt_ref[1] < 0  # nose down to go forward
    assert np.all(np.abs(s.tilt_ref) <= math.pi / 12 + 1e-12)


def run_closed_loop(ref, ticks, wind=WindField(), gains=None):
    ctrl = CascadeController(gains or CascadeGains(), P)
    s = KinematicState()
    states = []
    for _ in range(ticks):
        w = ctrl(ref, s)
        s = dynamics_step(s, allocate(w, P), wind, P, 0.01)
        states.append((s.copy(), ctrl.state, ctrl.tick))
    return states


def test_closed_loop_reaches_20m_reference():
    ref = np.array([20.0, 0.0, 0.0])
    hist = run_closed_loop(ref, 2000)
    dist = [np.linalg.norm(s.position - ref) for s, _, _ in hist]
    first = next(i for i, d in enumerate(dist) if d <= P.arm_length)
    assert (first + 1) * 0.01 < 20.0


def test_envelope_and_multirate_on_every_tick():
    g = CascadeGains()
    hist = run_closed_loop(np.array([15.0, -10.0, 2.0]), 600, WindField.from_heading(5, 45))
    prev = None
    for k, (_, cs, tick) in enumerate(hist):
        assert np.linalg.norm(cs.velocity_ref) <= 3.0 + 1e-9
        assert np.all(np.abs(cs.tilt_ref) <= math.pi / 12 + 1e-12)
        assert np.all(np.abs(cs.angular_accel) <= g.rate_max_acc + 1e-12)
        if prev is not None and k % 10 != 0:  # tick k ran with counter k
            assert np.array_equal(cs.velocity_ref, prev.velocity_ref)
            assert np.array_equal(cs.tilt_ref, prev.tilt_ref)
        prev = cs


def test_reset_replays_identically():
    ctrl = CascadeController(CascadeGains(), P)
    seq = [KinematicState(position=np.array([i * 0.1, 0, 0])) for i in range(30)]
    first = [ctrl(np.ones(3), s).as_vector() for s in seq]
    ctrl.reset()
    again = [ctrl(np.ones(3), s).as_vector() for s in seq]
    assert all(np.array_equal(a, b) for a, b in zip(first, again))


def test_flat_round_trip():
    g = CascadeGains(position=PidGains(2.0, 0.1, 0.3), rate_max_acc=7.0, leash_enabled=False)
    flat = g.to_flat()
    g2 = CascadeGains.from_flat(flat)
    assert g2.to_flat() == flat
    assert set(gain_names()) <= set(flat)
    with pytest.raises(InvalidConfigError):
        CascadeGains.from_flat({"bogus": 1.0})


@settings(max_examples=25, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_yaw_torque_always_zero(x, y):
    s = KinematicState(attitude=np.array([0.1 * x, 0.1 * y, x]), angular_rate=np.array([y, x, 0.3]))
    w, _ = cascade_step(CascadeGains(), CascadeState(), np.array([x, y, 0]) * 10, s, P, 0.01, 0)
    assert w.torques[2] == 0.0
