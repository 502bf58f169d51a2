"""Long-path flight by chaining granular navigation episodes."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .control import CascadeGains
from .dynamics import KinematicState, VehicleParams, WindField
from .env import (LOG_COLUMNS, OUT_OF_BOUNDS, REACHED, TIPPED, DegeneratePathError, EpisodeConfig,
                  NavigationEnv, random_initial_state)
from .ppo import PolicyParameters, act

PID_ONLY = "pid_only"
RL_SUPERVISED = "rl_supervised"
FLIGHT_LOG_COLUMNS = LOG_COLUMNS + ("segment", "wp_x", "wp_y", "wp_z")


class ConfigError(ValueError):
    pass


@dataclass
class Trajectory:
    waypoints: np.ndarray
    name: str = "trajectory"

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 3)
        if len(self.waypoints) == 0:
            raise ValueError("trajectory needs at least one waypoint")
        steps = np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)
        if np.any(steps == 0):
            raise DegeneratePathError("consecutive waypoints must be distinct")

    def __len__(self):
        return len(self.waypoints)


@dataclass
class SegmentOutcome:
    reason: str
    total_reward: float
    flight_time: float
    log: np.ndarray
    waypoint: np.ndarray
    start: np.ndarray
    rewards: list[float] = field(default_factory=list)


def decompose(path, bounding_box: float, name: str = "trajectory") -> Trajectory:
    """Insert evenly spaced waypoints so no leg is longer than ``bounding_box``."""
    pts = [np.asarray(p, dtype=float).reshape(3) for p in path]
    if not pts:
        raise ValueError("empty path")
    out = [pts[0]]
    for p in pts[1:]:
        leg = p - out[-1]
        length = float(np.linalg.norm(leg))
        if length == 0.0:
            warnings.warn(f"dropping zero-length leg at {p.tolist()}")
            continue
        n = max(1, math.ceil(length / bounding_box - 1e-9))
        start = out[-1]
        for k in range(1, n):
            out.append(start + leg * (k / n))
        out.append(p)
    return Trajectory(np.array(out), name)


def parse_trajectory(text: str, name: str = "trajectory") -> np.ndarray:
    """Parse ``x,y,z`` lines (``#`` starts a comment) into an ``(n, 3)`` array."""
    pts = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"{name}:{lineno}: expected 'x,y,z', got {raw.strip()!r}")
        try:
            pts.append([float(v) for v in parts])
        except ValueError:
            raise ValueError(f"{name}:{lineno}: non-numeric coordinate in {raw.strip()!r}") from None
    if not pts:
        raise ValueError(f"{name}: no waypoints")
    return np.array(pts)


def bundled_path(name: str) -> np.ndarray:
    """Load one of the shipped paths: ``square`` or ``patrol``."""
    text = resources.files("octorl.data").joinpath(f"{name}.txt").read_text()
    return parse_trajectory(text, name)


def fly(trajectory: Trajectory, mode: str, gains: CascadeGains,
        policy: PolicyParameters | None = None, wind: WindField | None = None,
        config: EpisodeConfig | None = None, seed: int | None = 0,
        params: VehicleParams | None = None, initial_state: KinematicState | None = None,
        wind_onset_segment: int = 0, wind_before: WindField | None = None) -> list[SegmentOutcome]:
    """Fly the waypoints in order, one granular episode per waypoint.

    The first episode starts from ``initial_state`` (navigation frame) or,
    if absent, from a random state around the first waypoint drawn from
    ``seed``.  Velocity, attitude, rates and all controller memory carry
    over between segments; only the position is re-based on the next
    waypoint.  Segments before ``wind_onset_segment`` see ``wind_before``
    (calm by default).  Flight stops after a tipped or out-of-bounds
    segment.
    """
    if mode not in (PID_ONLY, RL_SUPERVISED):
        raise ConfigError(f"unknown mode {mode!r}")
    if mode == RL_SUPERVISED and policy is None:
        raise ConfigError("rl_supervised mode needs a policy")
    config = config or EpisodeConfig()
    wind = wind or WindField()
    calm = wind_before or WindField()
    env = NavigationEnv(config, gains, params, wind, log=True)

    wps = trajectory.waypoints
    if initial_state is None:
        rel = random_initial_state(config, np.random.default_rng(seed))
        initial_state = KinematicState(rel.position + wps[0], rel.velocity, rel.attitude,
                                       rel.angular_rate)
    state = initial_state.copy()
    ctrl_state, ctrl_tick = None, 0
    outcomes = []
    for i, wp in enumerate(wps):
        rel_state = KinematicState(state.position - wp, state.velocity, state.attitude,
                                   state.angular_rate)
        obs = env.reset(initial_state=rel_state, controller_state=ctrl_state,
                        controller_tick=ctrl_tick, wind=wind if i >= wind_onset_segment else calm)
        rewards = []
        while True:
            action = act(policy, obs) if mode == RL_SUPERVISED else np.zeros(3)
            res = env.step(action)
            rewards.append(res.reward)
            obs = res.observation
            if res.done:
                break
        log = env.log_array()
        log[:, 1:4] += wp
        log[:, 13:16] += wp
        log = np.hstack([log, np.full((len(log), 1), float(i)), np.tile(wp, (len(log), 1))])
        outcomes.append(SegmentOutcome(env.reason, env.total_reward, env.ticks * config.dt, log,
                                       wp.copy(), state.position.copy(), rewards))
        state = KinematicState(env.state.position + wp, env.state.velocity, env.state.attitude,
                               env.state.angular_rate)
        ctrl_state, ctrl_tick = env.controller.state, env.controller.tick
        if env.reason in (TIPPED, OUT_OF_BOUNDS):
            break
    return outcomes


def flight_log(outcomes: list[SegmentOutcome]) -> np.ndarray:
    return np.vstack([o.log for o in outcomes]) if outcomes else np.empty((0, len(FLIGHT_LOG_COLUMNS)))


def chord_deviation(points, start, end) -> np.ndarray:
    """Distance of each point from the segment ``start -> end``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    start = np.asarray(start, dtype=float)
    d = np.asarray(end, dtype=float) - start
    L2 = float(d @ d)
    if L2 == 0.0:
        return np.linalg.norm(points - start, axis=1)
    t = np.clip((points - start) @ d / L2, 0.0, 1.0)
    return np.linalg.norm(points - (start + t[:, None] * d), axis=1)


def score(outcomes: list[SegmentOutcome], n_segments: int | None = None) -> dict:
    """Total reward, fraction of segments reached and deviation from the chords."""
    if not outcomes:
        raise ValueError("no segments to score")
    n = n_segments if n_segments is not None else len(outcomes)
    devs = np.concatenate([chord_deviation(o.log[:, 1:4], o.start, o.waypoint) for o in outcomes])
    return {
        "total_reward": float(sum(o.total_reward for o in outcomes)),
        "completion": sum(o.reason == REACHED for o in outcomes) / n,
        "segments_reached": int(sum(o.reason == REACHED for o in outcomes)),
        "segments_flown": len(outcomes),
        "flight_time": float(sum(o.flight_time for o in outcomes)),
        "mean_deviation": float(devs.mean()) if devs.size else 0.0,
        "max_deviation": float(devs.max()) if devs.size else 0.0,
        "deviation": devs,
    }
