"""Cascaded PID flight controller (position -> velocity -> attitude -> rate).

The lateral position and attitude loops use square-root scaling of the
proportional term; the position error is additionally leashed.  Position
and velocity loops run once every ``outer_divider`` ticks (10 Hz at the
default 100 Hz tick), attitude and rate loops run every tick.  Altitude is
held by two P-only loops around a tilt-compensated hover thrust, and yaw
torque is always zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import KinematicState, VehicleParams, Wrench, rotation_matrix

MAX_TILT = math.pi / 12
MAX_VELOCITY = 3.0


class InvalidConfigError(ValueError):
    pass


@dataclass
class PidGains:
    k_p: float = 0.0
    k_i: float = 0.0
    k_d: float = 0.0
    output_limit: float = math.inf
    integral_limit: float | None = None

    def __post_init__(self):
        if min(self.k_p, self.k_i, self.k_d) < 0:
            raise InvalidConfigError("PID gains must be non-negative")
        if self.integral_limit is None:
            self.integral_limit = 0.1 * self.output_limit
        if not (self.output_limit > 0 and self.integral_limit > 0):
            raise InvalidConfigError("PID limits must be positive")


@dataclass
class PidState:
    integral: np.ndarray | float = 0.0
    prev_error: np.ndarray | float | None = None
    last_output: np.ndarray | float = 0.0


def sqrt_scale(e: float, k_p: float, accel_limit: float, dt: float) -> float:
    """Square-root-scaled proportional response to error ``e``.

    Linear (``k_p * e``) inside ``|e| <= accel_limit / k_p**2``; beyond that
    the response grows as ``sqrt(2 * accel_limit * (|e| - L/2))`` which
    meets the linear branch continuously.  The result never exceeds
    ``|e| / dt``.
    """
    if not accel_limit > 0:
        raise InvalidConfigError("sqrt_scale needs a positive acceleration limit")
    if e == 0:
        return 0.0
    mag = abs(e)
    if k_p > 0:
        # compare without dividing so a tiny k_p cannot overflow L
        if mag * k_p * k_p <= accel_limit:
            out = k_p * mag
        else:
            out = math.sqrt(2.0 * accel_limit * (mag - 0.5 * accel_limit / (k_p * k_p)))
    else:
        out = math.sqrt(2.0 * accel_limit * mag)
    out = min(out, mag / dt)
    return math.copysign(out, e)


def leash(k_p: float, accel_limit: float, speed: float) -> float | None:
    """Maximum admissible position error given the current speed.

    Returns ``None`` when ``k_p == 0``: the leash is undefined and callers
    skip it for that step.
    """
    if not accel_limit > 0:
        raise InvalidConfigError("leash needs a positive acceleration limit")
    if k_p <= 0:
        return None
    return abs(accel_limit / (2.0 * k_p * k_p) + speed * speed / (2.0 * accel_limit))


def _clamp(x, limit):
    if np.ndim(x) == 0:
        return max(-limit, min(limit, float(x)))
    n = float(np.sqrt(np.dot(x, x)))
    return x * (limit / n) if n > limit else x


def pid_step(gains: PidGains, state: PidState, e, dt: float,
             use_sqrt: bool = False, accel_limit: float | None = None):
    """One PID update on error ``e`` (scalar or vector).

    Vector errors are clamped and square-root scaled by Euclidean norm so
    that the response is isotropic.  Derivative acts on the error and is
    zero on the first call after a reset.  Returns ``(output, new_state)``.
    """
    if not dt > 0:
        raise InvalidConfigError("dt must be positive")
    vector = np.ndim(e) > 0
    e = np.asarray(e, dtype=float) if vector else float(e)

    if use_sqrt:
        if vector:
            mag = float(np.sqrt(np.dot(e, e)))
            p_term = e * (sqrt_scale(mag, gains.k_p, accel_limit, dt) / mag) if mag > 0 else e * 0.0
        else:
            p_term = sqrt_scale(e, gains.k_p, accel_limit, dt)
    else:
        p_term = gains.k_p * e

    if state.prev_error is None:
        d_term = e * 0.0
    else:
        d_term = gains.k_d * (e - state.prev_error) / dt

    integral = _clamp(state.integral + e * dt, gains.integral_limit)
    out = _clamp(p_term + d_term + gains.k_i * integral, gains.output_limit)
    return out, PidState(integral=integral, prev_error=e, last_output=out)


@dataclass
class CascadeGains:
    """Gains of the four lateral loops plus altitude P gains.

    Output limits of the lateral loops are derived from the flight envelope
    (max velocity, max tilt, ``rate_max_acc``) rather than set per loop.
    """

    position: PidGains = field(default_factory=lambda: PidGains(1.0, 0.05, 0.0))
    velocity: PidGains = field(default_factory=lambda: PidGains(1.0, 0.2, 0.0))
    attitude: PidGains = field(default_factory=lambda: PidGains(6.0, 0.0, 0.0))
    rate: PidGains = field(default_factory=lambda: PidGains(20.0, 0.0, 0.0))
    rate_max_acc: float = 5.0
    sqrt_scaling_accel: float = 2.5
    leash_enabled: bool = True
    altitude_velocity_kp: float = 1.0
    altitude_rate_kp: float = 10.0
    max_velocity: float = MAX_VELOCITY
    max_tilt: float = MAX_TILT
    max_tilt_rate: float = math.pi / 2

    def __post_init__(self):
        if not self.rate_max_acc > 0:
            raise InvalidConfigError("rate_max_acc must be positive")
        if not self.sqrt_scaling_accel > 0:
            raise InvalidConfigError("sqrt_scaling_accel must be positive")
        lat_acc = 9.81 * math.tan(self.max_tilt)
        self.position = _with_limit(self.position, self.max_velocity)
        self.velocity = _with_limit(self.velocity, lat_acc)
        self.attitude = _with_limit(self.attitude, self.max_tilt_rate)
        self.rate = _with_limit(self.rate, self.rate_max_acc)

    # flat key names follow the table row labels, e.g. ``position.k_p``
    LOOPS = ("position", "velocity", "attitude", "rate")

    def to_flat(self) -> dict[str, float]:
        d = {}
        for loop in self.LOOPS:
            g = getattr(self, loop)
            for k in ("k_p", "k_i", "k_d"):
                d[f"{loop}.{k}"] = getattr(g, k)
        d["rate.max_acc"] = self.rate_max_acc
        d["sqrt_scaling_accel"] = self.sqrt_scaling_accel
        d["leash_enabled"] = self.leash_enabled
        d["altitude_velocity.k_p"] = self.altitude_velocity_kp
        d["altitude_rate.k_p"] = self.altitude_rate_kp
        return d

    @classmethod
    def from_flat(cls, d: dict, base: "CascadeGains | None" = None) -> "CascadeGains":
        flat = (base or cls()).to_flat()
        unknown = set(d) - set(flat)
        if unknown:
            raise InvalidConfigError(f"unknown gain keys: {sorted(unknown)}")
        flat.update(d)
        loops = {loop: PidGains(float(flat[f"{loop}.k_p"]), float(flat[f"{loop}.k_i"]),
                                float(flat[f"{loop}.k_d"])) for loop in cls.LOOPS}
        leash_flag = flat["leash_enabled"]
        if isinstance(leash_flag, str):
            leash_flag = leash_flag.strip().lower() in ("1", "true", "yes", "on")
        return cls(**loops, rate_max_acc=float(flat["rate.max_acc"]),
                   sqrt_scaling_accel=float(flat["sqrt_scaling_accel"]),
                   leash_enabled=bool(leash_flag),
                   altitude_velocity_kp=float(flat["altitude_velocity.k_p"]),
                   altitude_rate_kp=float(flat["altitude_rate.k_p"]))


def _with_limit(g: PidGains, limit: float) -> PidGains:
    return PidGains(g.k_p, g.k_i, g.k_d, output_limit=limit, integral_limit=0.1 * limit)


@dataclass
class CascadeState:
    """Every piece of controller memory: loop states and held references."""

    position: PidState = field(default_factory=PidState)
    velocity: PidState = field(default_factory=PidState)
    attitude: PidState = field(default_factory=PidState)
    rate: PidState = field(default_factory=PidState)
    velocity_ref: np.ndarray = field(default_factory=lambda: np.zeros(2))
    climb_ref: float = 0.0
    tilt_ref: np.ndarray = field(default_factory=lambda: np.zeros(2))
    rate_ref: np.ndarray = field(default_factory=lambda: np.zeros(2))
    angular_accel: np.ndarray = field(default_factory=lambda: np.zeros(2))


def cascade_step(gains: CascadeGains, states: CascadeState, reference_position,
                 measured: KinematicState, params: VehicleParams, dt: float,
                 tick: int, outer_divider: int = 10):
    """Run one controller tick and return ``(Wrench, new CascadeState)``.

    ``tick`` counts physics steps since reset; the outer loops fire when
    ``tick % outer_divider == 0``.
    """
    ref = np.asarray(reference_position, dtype=float)
    s = CascadeState(states.position, states.velocity, states.attitude, states.rate,
                     states.velocity_ref, states.climb_ref, states.tilt_ref,
                     states.rate_ref, states.angular_accel)
    R = rotation_matrix(*measured.attitude)
    v_nav = R @ measured.velocity
    roll, pitch, yaw = measured.attitude
    g = params.gravity

    if tick % outer_divider == 0:
        dt_outer = dt * outer_divider
        accel = gains.sqrt_scaling_accel
        e_pos = ref[:2] - measured.position[:2]
        if gains.leash_enabled:
            limit = leash(gains.position.k_p, accel, float(np.hypot(v_nav[0], v_nav[1])))
            if limit is not None:
                e_pos = _clamp(e_pos, limit)
        s.velocity_ref, s.position = pid_step(gains.position, s.position, e_pos, dt_outer,
                                              use_sqrt=True, accel_limit=accel)
        s.climb_ref = _clamp(gains.altitude_velocity_kp * (ref[2] - measured.position[2]),
                             gains.max_velocity)

        a_xy, s.velocity = pid_step(gains.velocity, s.velocity, s.velocity_ref - v_nav[:2],
                                    dt_outer)
        cy, sy = math.cos(yaw), math.sin(yaw)
        a_fwd = cy * a_xy[0] + sy * a_xy[1]
        a_right = -sy * a_xy[0] + cy * a_xy[1]
        # (roll, pitch)
        s.tilt_ref = np.clip(np.array([a_right / g, -a_fwd / g]), -gains.max_tilt, gains.max_tilt)

    e_att = s.tilt_ref - measured.attitude[:2]
    s.rate_ref, s.attitude = pid_step(gains.attitude, s.attitude, e_att, dt,
                                      use_sqrt=True, accel_limit=gains.rate_max_acc)
    alpha, s.rate = pid_step(gains.rate, s.rate, s.rate_ref - measured.angular_rate[:2], dt)
    alpha = np.clip(alpha, -gains.rate_max_acc, gains.rate_max_acc)
    s.angular_accel = alpha

    climb_acc = gains.altitude_rate_kp * (s.climb_ref - v_nav[2])
    tilt_cos = max(math.cos(roll) * math.cos(pitch), 0.5)
    thrust = params.mass * (g - climb_acc) / tilt_cos
    thrust = min(max(thrust, 0.0), params.max_thrust)

    I = params.inertia
    torques = np.array([I[0, 0] * alpha[0], I[1, 1] * alpha[1], 0.0])
    return Wrench(thrust, torques), s


class CascadeController:
    """Stateful wrapper that owns a ``CascadeState`` and the tick counter."""

    def __init__(self, gains: CascadeGains, params: VehicleParams, dt: float = 0.01,
                 outer_divider: int = 10):
        self.gains = gains
        self.params = params
        self.dt = dt
        self.outer_divider = outer_divider
        self.reset()

    def reset(self):
        self.state = CascadeState()
        self.tick = 0

    def __call__(self, reference_position, measured: KinematicState) -> Wrench:
        wrench, self.state = cascade_step(self.gains, self.state, reference_position, measured,
                                          self.params, self.dt, self.tick, self.outer_divider)
        self.tick += 1
        return wrench


def gain_names() -> list[str]:
    """Names of the tunable gains, in table order."""
    names = [f"{loop}.{k}" for loop in CascadeGains.LOOPS for k in ("k_p", "k_i", "k_d")]
    return names + ["rate.max_acc"]


__all__ = [
    "CascadeController", "CascadeGains", "CascadeState", "InvalidConfigError", "PidGains",
    "PidState", "cascade_step", "gain_names", "leash", "pid_step", "sqrt_scale",
]
