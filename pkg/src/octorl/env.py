"""Granular waypoint-navigation episodes for the supervisory policy.

The waypoint sits at the origin of the episode frame.  Every
``steps_between_actions`` physics ticks the supervisor chooses an offset in
``[-1, 1]^3`` which, scaled by ``scaling_factor * bounding_box``, becomes the
position reference of the cascaded PID controller.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .control import CascadeController, CascadeGains, CascadeState
from .dynamics import KinematicState, VehicleParams, WindField, allocate, dynamics_step

REACHED, TIPPED, OUT_OF_BOUNDS, TIMED_OUT, RUNNING = (
    "reached", "tipped", "out_of_bounds", "timed_out", "running")
TERMINAL_REASONS = (REACHED, TIPPED, OUT_OF_BOUNDS, TIMED_OUT)

LOG_COLUMNS = ("t", "x", "y", "z", "vx", "vy", "vz", "roll", "pitch", "yaw",
               "wx", "wy", "wz", "ref_x", "ref_y", "ref_z", "reward_flag")


class ContractViolation(RuntimeError):
    pass


class DegeneratePathError(ValueError):
    """Two consecutive waypoints coincide, so the leg between them is undefined."""


class SimulationDiverged(RuntimeError):
    """The physics produced a non-finite state."""


@dataclass
class EpisodeConfig:
    bounding_box: float = 20.0
    scaling_factor: float = 0.25
    steps_between_actions: int = 25
    dt: float = 0.01
    max_time: float = 20.0
    tip_threshold: float = math.radians(30.0)
    arrival_radius: float = 0.6
    max_velocity: float = 3.0
    rate_bound: float = math.pi
    # slack beyond the box before out-of-bounds; None means arrival_radius
    out_of_bounds_margin: float | None = None

    def __post_init__(self):
        self.steps_between_actions = int(self.steps_between_actions)
        if self.out_of_bounds_margin is None:
            self.out_of_bounds_margin = self.arrival_radius
        if not self.bounding_box > 0:
            raise ValueError("bounding_box must be positive")
        if not 0 < self.scaling_factor <= 1:
            raise ValueError("scaling_factor must be in (0, 1]")
        if self.steps_between_actions < 1:
            raise ValueError("steps_between_actions must be >= 1")
        if not (self.dt > 0 and self.max_time > 0 and self.rate_bound > 0):
            raise ValueError("dt, max_time and rate_bound must be positive")

    @property
    def max_ticks(self) -> int:
        return int(round(self.max_time / self.dt))

    @property
    def decision_period(self) -> float:
        """Simulated seconds between supervisory decisions (the time penalty)."""
        return self.steps_between_actions * self.dt


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    reason: str = RUNNING
    info: dict = field(default_factory=dict)


def _bounds(config: EpisodeConfig) -> np.ndarray:
    b = np.empty(12)
    b[0:3] = config.bounding_box
    b[3:6] = config.max_velocity
    b[6:9] = math.pi
    b[9:12] = config.rate_bound
    return b


def normalize(state: KinematicState, config: EpisodeConfig) -> np.ndarray:
    """Min-max map of the kinematic state onto ``[-1, 1]^12`` (clipped)."""
    return np.clip(state.as_vector() / _bounds(config), -1.0, 1.0)


def denormalize(obs, config: EpisodeConfig) -> KinematicState:
    return KinematicState.from_vector(np.clip(np.asarray(obs, dtype=float), -1, 1) * _bounds(config))


def reward(r_i, r_next, psi_i: float, psi_next: float, r_wp, r_0, dt: float) -> float:
    """Per-decision reward: time penalty, turn penalty, advance and cross terms.

    The cross term uses the unit direction of the start-to-waypoint chord,
    so it measures distance travelled perpendicular to the shortest path.
    A zero chord (start on the waypoint) has no path to leave and
    contributes no cross term.
    """
    chord = np.asarray(r_wp, dtype=float) - np.asarray(r_0, dtype=float)
    n = float(np.linalg.norm(chord))
    d = np.asarray(r_next, dtype=float) - np.asarray(r_i, dtype=float)
    advance = float(np.linalg.norm(d))
    cross = float(np.linalg.norm(np.cross(d, chord / n))) if n > 0.0 else 0.0
    return -dt - (abs(psi_next) - abs(psi_i)) + advance - cross


def terminal_reward(reason: str, position, waypoint, bounding_box: float) -> float:
    if reason == REACHED:
        return bounding_box * 20.0
    if reason in (TIPPED, OUT_OF_BOUNDS):
        return -bounding_box * 20.0
    if reason == TIMED_OUT:
        # hypot is correctly rounded, so the penalty is exact for the given offset
        offset = np.asarray(position, dtype=float) - np.asarray(waypoint, dtype=float)
        return -math.hypot(*offset.tolist()) * 10.0
    raise ValueError(f"no terminal reward for reason {reason!r}")


def termination(state: KinematicState, ticks: int, config: EpisodeConfig) -> str:
    """Classify the state; checks run in the order tipped, out of bounds, reached, timeout."""
    roll, pitch = state.attitude[0], state.attitude[1]
    if abs(roll) > config.tip_threshold or abs(pitch) > config.tip_threshold:
        return TIPPED
    pos = state.position
    if np.max(np.abs(pos)) > config.bounding_box + config.out_of_bounds_margin:
        return OUT_OF_BOUNDS
    if float(np.sqrt(pos @ pos)) <= config.arrival_radius:
        return REACHED
    if ticks >= config.max_ticks:
        return TIMED_OUT
    return RUNNING


def random_initial_state(config: EpisodeConfig, rng: np.random.Generator) -> KinematicState:
    """Uniform position in the box, velocity uniform in the ``max_velocity`` ball, level."""
    pos = rng.uniform(-config.bounding_box, config.bounding_box, size=3)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    speed = config.max_velocity * rng.uniform() ** (1.0 / 3.0)
    return KinematicState(position=pos, velocity=direction * speed)


class NavigationEnv:
    """One granular navigation problem toward the origin.

    The controller, dynamics and wind are stepped together; PID state is
    excluded from the observation.  ``reset`` accepts an explicit starting
    state and controller memory so a trajectory can chain episodes.
    """

    def __init__(self, config: EpisodeConfig | None = None, gains: CascadeGains | None = None,
                 params: VehicleParams | None = None, wind: WindField | None = None,
                 log: bool = False):
        self.config = config or EpisodeConfig()
        self.gains = gains or CascadeGains()
        self.params = params or VehicleParams()
        self.wind = wind or WindField()
        self.controller = CascadeController(self.gains, self.params, self.config.dt)
        self.keep_log = log
        self.state: KinematicState | None = None
        self.done = True

    def reset(self, seed: int | None = None, initial_state: KinematicState | None = None,
              controller_state: CascadeState | None = None, controller_tick: int = 0,
              wind: WindField | None = None) -> np.ndarray:
        if wind is not None:
            self.wind = wind
        if initial_state is None:
            initial_state = random_initial_state(self.config, np.random.default_rng(seed))
        self.state = initial_state.copy()
        self.start = self.state.position.copy()
        self.controller.reset()
        if controller_state is not None:
            self.controller.state = controller_state
            self.controller.tick = controller_tick
        self.ticks = 0
        self.reference = np.zeros(3)
        self.done = False
        self.reason = RUNNING
        self.total_reward = 0.0
        self.log_rows: list[np.ndarray] = []
        return normalize(self.state, self.config)

    def observation(self) -> np.ndarray:
        return normalize(self.state, self.config)

    def step(self, action) -> StepResult:
        if self.done:
            raise ContractViolation("step() called on a finished episode")
        cfg = self.config
        a = np.clip(np.asarray(action, dtype=float).reshape(3), -1.0, 1.0)
        self.reference = cfg.scaling_factor * cfg.bounding_box * a
        r_prev = self.state.position.copy()
        psi_prev = float(self.state.attitude[2])

        reason = RUNNING
        for k in range(cfg.steps_between_actions):
            wrench = self.controller(self.reference, self.state)
            speeds = allocate(wrench, self.params)
            self.state = dynamics_step(self.state, speeds, self.wind, self.params, cfg.dt)
            self.ticks += 1
            if not self.state.is_finite():
                raise SimulationDiverged(f"non-finite state at tick {self.ticks}")
            reason = termination(self.state, self.ticks, cfg)
            if self.keep_log:
                last = reason != RUNNING or k == cfg.steps_between_actions - 1
                self._log(1.0 if last else 0.0)
            if reason != RUNNING:
                break

        r = reward(r_prev, self.state.position, psi_prev, float(self.state.attitude[2]),
                   np.zeros(3), self.start, cfg.decision_period)
        if reason != RUNNING:
            r += terminal_reward(reason, self.state.position, np.zeros(3), cfg.bounding_box)
            self.done = True
            self.reason = reason
        self.total_reward += r
        return StepResult(normalize(self.state, cfg), r, reason != RUNNING, reason,
                          {"ticks": self.ticks, "position": self.state.position.copy()})

    def _log(self, flag: float):
        self.log_rows.append(np.concatenate([[self.ticks * self.config.dt],
                                             self.state.as_vector(), self.reference, [flag]]))

    def log_array(self) -> np.ndarray:
        if not self.log_rows:
            return np.empty((0, len(LOG_COLUMNS)))
        return np.vstack(self.log_rows)


def write_log_csv(rows: np.ndarray, columns=LOG_COLUMNS) -> str:
    """Render a tick log as comma-separated text with a header row."""
    buf = io.StringIO()
    np.savetxt(buf, np.asarray(rows).reshape(-1, len(columns)), delimiter=",",
               header=",".join(columns), comments="", fmt="%.17g")
    return buf.getvalue()


def read_log_csv(text: str) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty log")
    header = lines[0].split(",")
    if len(lines) == 1:
        return header, np.empty((0, len(header)))
    data = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
    if data.shape[1] != len(header):
        raise ValueError("log rows do not match header")
    return header, data
