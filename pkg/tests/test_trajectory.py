import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from octorl.control import CascadeGains
from octorl.dynamics import KinematicState, WindField
from octorl.env import REACHED, TIPPED, DegeneratePathError, EpisodeConfig
from octorl.ppo import PolicyParameters
from octorl.trajectory import (FLIGHT_LOG_COLUMNS, PID_ONLY, RL_SUPERVISED, ConfigError,
                               SegmentOutcome, Trajectory, bundled_path, chord_deviation,
                               decompose, flight_log, fly, parse_trajectory, score)

SQUARE = decompose(bundled_path("square"), 20.0, "square")


def test_decompose_examples():
    t = decompose([[0, 0, 0], [60, 0, 0]], 20)
    np.testing.assert_allclose(t.waypoints[:, 0], [0, 20, 40, 60])
    np.testing.assert_allclose(SQUARE.waypoints, bundled_path("square"))
    assert len(SQUARE) == 4
    t = decompose([[0, 0, 0], [50, 0, 0]], 20)
    assert len(t) == 4
    np.testing.assert_allclose(np.diff(t.waypoints[:, 0]), 50 / 3)


def test_decompose_drops_zero_legs():
    with pytest.warns(UserWarning):
        t = decompose([[0, 0, 0], [0, 0, 0], [10, 0, 0]], 20)
    assert len(t) == 2


@settings(max_examples=50)
@given(st.lists(st.tuples(*[st.floats(-100, 100)] * 3), min_size=2, max_size=6), st.floats(1, 40))
def test_decompose_leg_bound(points, box):
    pts = np.array(points)
    if np.any(np.linalg.norm(np.diff(pts, axis=0), axis=1) == 0):
        return
    t = decompose(pts, box)
    legs = np.linalg.norm(np.diff(t.waypoints, axis=0), axis=1)
    assert np.all(legs <= box * (1 + 1e-9))
    # original points are preserved in order
    for p in pts:
        assert np.min(np.linalg.norm(t.waypoints - p, axis=1)) < 1e-9


def test_parse_errors_name_line():
    with pytest.raises(ValueError, match=":2:"):
        parse_trajectory("0,0,0\n1,2\n")
    with pytest.raises(ValueError, match=":1:"):
        parse_trajectory("a,b,c")
    assert parse_trajectory("# c\n1,2,3  # tail\n").tolist() == [[1, 2, 3]]
    with pytest.raises(DegeneratePathError):
        Trajectory([[0, 0, 0], [0, 0, 0]])


def test_bundled_patrol_is_long():
    p = bundled_path("patrol")
    assert np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)) > 250


def test_nominal_pid_completes_square():
    out = fly(SQUARE, PID_ONLY, CascadeGains(), seed=0)
    sc = score(out, len(SQUARE))
    assert sc["completion"] == 1.0
    assert sc["total_reward"] == pytest.approx(sum(o.total_reward for o in out))
    log = flight_log(out)
    assert log.shape == (sum(round(o.flight_time / 0.01) for o in out), len(FLIGHT_LOG_COLUMNS))


@pytest.mark.parametrize("wind", [WindField(), WindField.from_heading(5, 90)])
def test_zero_supervisor_is_bit_identical(wind):
    z = PolicyParameters.zeros()
    a = fly(SQUARE, PID_ONLY, CascadeGains(), wind=wind, seed=3)
    b = fly(SQUARE, RL_SUPERVISED, CascadeGains(), z, wind=wind, seed=3)
    assert np.array_equal(flight_log(a), flight_log(b))
    assert [o.total_reward for o in a] == [o.total_reward for o in b]


def test_rl_mode_needs_policy():
    with pytest.raises(ConfigError):
        fly(SQUARE, RL_SUPERVISED, CascadeGains())
    with pytest.raises(ConfigError):
        fly(SQUARE, "bogus", CascadeGains())


def test_wind_onset():
    w = WindField.from_heading(5, 90)
    late = fly(SQUARE, PID_ONLY, CascadeGains(), wind=w, seed=1, wind_onset_segment=2)
    calm = fly(SQUARE, PID_ONLY, CascadeGains(), seed=1)
    # identical until the wind starts
    assert np.array_equal(late[0].log, calm[0].log) and np.array_equal(late[1].log, calm[1].log)
    assert not np.array_equal(late[2].log, calm[2].log)


def test_state_carries_over_between_segments():
    out = fly(SQUARE, PID_ONLY, CascadeGains(), seed=2)
    for a, b in zip(out, out[1:]):
        np.testing.assert_array_equal(a.log[-1, 1:4], b.start)


def test_score_completion_and_deviation():
    seg = lambda reason: SegmentOutcome(reason, 1.0, 1.0, np.zeros((2, len(FLIGHT_LOG_COLUMNS))),
                                        np.ones(3), np.zeros(3))
    sc = score([seg(REACHED), seg(TIPPED)], 4)
    assert sc["completion"] == 0.25
    pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
    assert np.all(chord_deviation(pts, [0, 0, 0], [2, 0, 0]) == 0)
    assert chord_deviation([[1, 3, 0]], [0, 0, 0], [2, 0, 0])[0] == pytest.approx(3)


def test_fly_from_explicit_state_is_deterministic():
    s0 = KinematicState(position=np.array([-5.0, 3.0, 1.0]))
    a = fly(SQUARE, PID_ONLY, CascadeGains(), initial_state=s0, config=EpisodeConfig())
    b = fly(SQUARE, PID_ONLY, CascadeGains(), initial_state=s0, config=EpisodeConfig())
    assert np.array_equal(flight_log(a), flight_log(b))
