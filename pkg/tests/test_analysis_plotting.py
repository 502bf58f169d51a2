import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from octorl.analysis import (HEADINGS, Controller, across_heading_std, action_azimuths,
                             azimuth_histogram, cosine_similarity, heading_sweep,
                             random_observations, reward_density, rows_csv, shifted_similarity)
from octorl.control import CascadeGains
from octorl.env import EpisodeConfig
from octorl.plotting import EmptyPlotError, plot_curve, plot_flight, plot_similarity
from octorl.ppo import PolicyParameters
from octorl.trajectory import FLIGHT_LOG_COLUMNS, bundled_path, decompose, flight_log, fly

SQUARE = decompose(bundled_path("square"), 20.0)


def test_heading_sweep_has_eight_rows():
    # one seed and short segments: the point is the table shape
    rows = heading_sweep(Controller("pid", CascadeGains()), SQUARE, 5.0, seeds=[0],
                         config=EpisodeConfig(max_time=1.0))
    assert [r["heading"] for r in rows] == list(HEADINGS)
    assert len(rows_csv(rows).splitlines()) == 9
    assert across_heading_std(rows) >= 0


def test_reward_density_integrates_to_one():
    d, edges = reward_density(np.random.default_rng(0).normal(100, 5, 30))
    assert np.sum(d * np.diff(edges)) == pytest.approx(1.0)
    d, edges = reward_density([3.0] * 5)
    assert np.sum(d * np.diff(edges)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        reward_density([])


def test_random_observations_in_cube():
    o = random_observations(1000, 3)
    assert o.shape == (1000, 12) and np.all(np.abs(o) <= 1)
    assert np.array_equal(o, random_observations(1000, 3))


def test_azimuth_histogram():
    h = azimuth_histogram([0.0, 5.0, 10.0, 359.0, 725.0])
    assert h.shape == (36,) and h.sum() == 5
    assert h[0] == 3 and h[1] == 1 and h[35] == 1
    p = PolicyParameters.initial(0, 16)
    az = action_azimuths(p, random_observations(50))
    assert np.all((az >= 0) & (az < 360))


@settings(max_examples=30)
@given(st.lists(st.integers(0, 20), min_size=36, max_size=36).filter(any), st.integers(0, 35))
def test_shift_similarity_properties(counts, k):
    h = np.array(counts, dtype=float)
    shifts, sims = shifted_similarity(h, h)
    assert shifts[1] == 10.0
    assert sims[0] == pytest.approx(1.0)
    assert np.all(sims <= 1 + 1e-12)
    # a rotated copy is recovered at exactly that shift
    _, sims = shifted_similarity(h, np.roll(h, -k))
    assert sims[k] == pytest.approx(1.0)


def test_cosine_similarity_zero_vector():
    assert cosine_similarity(np.zeros(3), np.ones(3)) == 0.0
    assert cosine_similarity([1, 0], [0, 1]) == 0.0


def square_log():
    return flight_log(fly(SQUARE, "pid_only", CascadeGains(), seed=0))


def test_flight_plot_deterministic_with_one_chord_per_segment():
    log = square_log()
    a = plot_flight(list(FLIGHT_LOG_COLUMNS), log)
    b = plot_flight(list(FLIGHT_LOG_COLUMNS), log)
    assert a == b
    ids = re.findall(rb'id="(reference-segment-\d+)"', a)
    assert sorted(set(ids)) == [b"reference-segment-%d" % k for k in range(4)]
    assert b"flown-path" in a


def test_empty_plots_rejected():
    with pytest.raises(EmptyPlotError):
        plot_flight(list(FLIGHT_LOG_COLUMNS), np.zeros((0, len(FLIGHT_LOG_COLUMNS))))
    with pytest.raises(EmptyPlotError):
        plot_curve(["episodes", "mean_episode_reward"], np.zeros((0, 2)))
    with pytest.raises(ValueError):
        plot_flight(["x", "y"], np.ones((3, 2)))


def test_curve_and_similarity_plots_are_svg():
    svg = plot_curve(["episodes", "mean_episode_reward"], np.array([[1, 2.0], [2, 3.0]]))
    assert svg.startswith(b"<?xml") and b"<svg" in svg
    assert plot_similarity(np.arange(3), np.ones(3)) == plot_similarity(np.arange(3), np.ones(3))
