"""Six-degree-of-freedom rigid-body model of a flat octorotor.

Frames follow the north-east-down convention: the navigation frame has
``z`` pointing down, so gravity is ``+g`` along ``z`` and rotor thrust acts
along the body ``-z`` axis.  Attitude is a roll-pitch-yaw (Z-Y-X) Euler
triple; velocity and angular rate live in the body frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

GRAVITY = 9.81

#: Lateral force quoted for the Tarot T-18 at full tilt and full rotor speed.
REFERENCE_LATERAL_FORCE = 26.65
REFERENCE_MAX_TILT = math.pi / 12


class InvalidInputError(ValueError):
    """Raised when a physics routine receives non-finite or out-of-range input."""


def _finite(name: str, *arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidInputError(f"{name}: non-finite input")


def wrap_angle(a):
    """Wrap angle(s) into ``[-pi, pi)``."""
    return (np.asarray(a, dtype=float) + math.pi) % (2.0 * math.pi) - math.pi


@dataclass
class KinematicState:
    """Position (nav frame), body velocity, Euler attitude and body rates."""

    position: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    velocity: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    attitude: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    angular_rate: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)
        self.attitude = np.asarray(self.attitude, dtype=float).reshape(3)
        self.angular_rate = np.asarray(self.angular_rate, dtype=float).reshape(3)

    def as_vector(self) -> NDArray[np.float64]:
        return np.concatenate([self.position, self.velocity, self.attitude, self.angular_rate])

    @classmethod
    def from_vector(cls, x) -> "KinematicState":
        x = np.asarray(x, dtype=float).reshape(12)
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:9].copy(), x[9:12].copy())

    def copy(self) -> "KinematicState":
        return KinematicState.from_vector(self.as_vector())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_vector())))

    def nav_velocity(self) -> NDArray[np.float64]:
        return rotation_matrix(*self.attitude) @ self.velocity


@dataclass
class WindField:
    """Constant lateral force (N) in the navigation frame."""

    force: NDArray[np.float64] = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float).reshape(2)
        _finite("WindField", self.force)

    @classmethod
    def from_heading(cls, magnitude: float, heading_deg: float) -> "WindField":
        """Force of ``magnitude`` newtons pointing ``heading_deg`` degrees from +x."""
        if magnitude < 0:
            raise InvalidInputError("wind magnitude must be >= 0")
        h = math.radians(heading_deg)
        return cls(np.array([magnitude * math.cos(h), magnitude * math.sin(h)]))

    @property
    def magnitude(self) -> float:
        return float(np.hypot(*self.force))

    @property
    def heading_deg(self) -> float:
        return math.degrees(math.atan2(self.force[1], self.force[0])) % 360.0


@dataclass
class Wrench:
    """Collective thrust (N, along body -z) and body torques (N m)."""

    thrust_z: float = 0.0
    torques: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.thrust_z = float(self.thrust_z)
        self.torques = np.asarray(self.torques, dtype=float).reshape(3)

    def as_vector(self) -> NDArray[np.float64]:
        return np.array([self.thrust_z, *self.torques])


@dataclass
class VehicleParams:
    """Geometry and rotor coefficients of a flat eight-arm multirotor.

    ``inertia`` defaults to a point-mass-on-arms estimate using
    ``rotor_mass`` at each arm tip.  ``max_rotor_speed`` defaults to the
    speed that gives a thrust-to-weight ratio of 2.
    """

    mass: float = 10.66
    arm_length: float = 0.6
    rotor_count: int = 8
    k_f: float = 8.0e-5
    k_m: float = 1.3e-6
    max_rotor_speed: float | None = None
    gravity: float = GRAVITY
    rotor_mass: float = 0.8
    inertia: NDArray[np.float64] | None = None
    rotor_angles: NDArray[np.float64] | None = None
    spin_directions: NDArray[np.float64] | None = None

    mixer: NDArray[np.float64] = field(init=False, repr=False, compare=False)
    mixer_pinv: NDArray[np.float64] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.rotor_count)
        if self.rotor_angles is None:
            self.rotor_angles = np.arange(n) * (2.0 * math.pi / n)
        if self.spin_directions is None:
            self.spin_directions = np.array([1.0 if i % 2 == 0 else -1.0 for i in range(n)])
        self.rotor_angles = np.asarray(self.rotor_angles, dtype=float).reshape(n)
        self.spin_directions = np.asarray(self.spin_directions, dtype=float).reshape(n)
        if self.inertia is None:
            lx = self.arm_length * np.sin(self.rotor_angles)
            ly = self.arm_length * np.cos(self.rotor_angles)
            ixx = self.rotor_mass * float(np.sum(lx**2))
            iyy = self.rotor_mass * float(np.sum(ly**2))
            self.inertia = np.diag([ixx, iyy, ixx + iyy])
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        if self.max_rotor_speed is None:
            hover_sq = self.mass * self.gravity / (n * self.k_f)
            self.max_rotor_speed = math.sqrt(2.0 * hover_sq)
        self.max_rotor_speed = float(self.max_rotor_speed)
        self._validate()
        self.mixer = mixer_matrix(self)
        self.mixer_pinv = np.linalg.pinv(self.mixer)

    def _validate(self):
        if self.mass <= 0:
            raise InvalidInputError("mass must be positive")
        if np.any(np.diag(self.inertia) <= 0):
            raise InvalidInputError("inertia diagonal must be positive")
        if self.k_f <= 0 or self.k_m <= 0:
            raise InvalidInputError("k_f and k_m must be positive")
        if np.sum(self.spin_directions) != 0:
            raise InvalidInputError("spin directions must cancel")
        if self.max_rotor_speed <= 0:
            raise InvalidInputError("max_rotor_speed must be positive")

    @property
    def max_thrust(self) -> float:
        return self.rotor_count * self.k_f * self.max_rotor_speed**2

    @property
    def hover_thrust(self) -> float:
        return self.mass * self.gravity

    def to_dict(self) -> dict:
        return {
            "mass": self.mass,
            "arm_length": self.arm_length,
            "rotor_count": self.rotor_count,
            "k_f": self.k_f,
            "k_m": self.k_m,
            "max_rotor_speed": self.max_rotor_speed,
            "gravity": self.gravity,
            "rotor_mass": self.rotor_mass,
            "inertia_xx": float(self.inertia[0, 0]),
            "inertia_yy": float(self.inertia[1, 1]),
            "inertia_zz": float(self.inertia[2, 2]),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleParams":
        d = dict(d)
        inertia = None
        if "inertia_xx" in d:
            inertia = np.diag([float(d.pop("inertia_xx")), float(d.pop("inertia_yy")),
                               float(d.pop("inertia_zz"))])
        kw = {k: float(v) for k, v in d.items() if k != "rotor_count"}
        if "rotor_count" in d:
            kw["rotor_count"] = int(d["rotor_count"])
        return cls(inertia=inertia, **kw)


def mixer_matrix(params: VehicleParams) -> NDArray[np.float64]:
    """4 x n map from squared rotor speeds to (thrust, roll, pitch, yaw torque)."""
    a = params.rotor_angles
    kf, L = params.k_f, params.arm_length
    return np.vstack([
        np.full_like(a, kf),
        -kf * L * np.sin(a),
        kf * L * np.cos(a),
        params.k_m * params.spin_directions,
    ])


def allocate(wrench: Wrench, params: VehicleParams) -> NDArray[np.float64]:
    """Minimum-norm rotor speeds (rad/s) that realise ``wrench``.

    Squared speeds come from the mixer pseudo-inverse; negative entries are
    zeroed before the square root and the result is clipped to the rotor
    speed limit.
    """
    w = wrench.as_vector()
    _finite("allocate", w)
    sq = params.mixer_pinv @ w
    np.maximum(sq, 0.0, out=sq)
    return np.minimum(np.sqrt(sq), params.max_rotor_speed)


def rotation_matrix(roll: float, pitch: float, yaw: float) -> NDArray[np.float64]:
    """Body-to-navigation rotation for Z-Y-X Euler angles."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def euler_rates(attitude, rate) -> NDArray[np.float64]:
    roll, pitch = attitude[0], attitude[1]
    p, q, r = rate
    sr, cr = math.sin(roll), math.cos(roll)
    tp, cp = math.tan(pitch), math.cos(pitch)
    return np.array([
        p + (q * sr + r * cr) * tp,
        q * cr - r * sr,
        (q * sr + r * cr) / cp,
    ])


def dynamics_step(state: KinematicState, rotor_speeds, wind: WindField,
                  params: VehicleParams, dt: float) -> KinematicState:
    """Advance the rigid body one step with semi-implicit Euler.

    Rotor speeds act instantly (no motor lag).  Body rate and velocity are
    updated first; attitude and position are then integrated with the new
    rates and velocity.
    """
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    s = np.asarray(rotor_speeds, dtype=float)
    x = state.as_vector()
    # a sum is non-finite iff some term is (barring overflow)
    if not math.isfinite(float(s.sum() + x.sum() + wind.force.sum())):
        raise InvalidInputError("dynamics_step: non-finite input")
    if s.min() < 0 or s.max() > params.max_rotor_speed * (1 + 1e-12):
        raise InvalidInputError("rotor speeds outside [0, max_rotor_speed]")

    thrust, tx, ty, tz = (params.mixer @ (s * s)).tolist()
    R = rotation_matrix(x[6], x[7], x[8])
    m = params.mass
    fb = R.T @ np.array([wind.force[0], wind.force[1], m * params.gravity])
    u, v, w = x[3:6].tolist()
    p, q, r = x[9:12].tolist()
    ixx, iyy, izz = params.inertia[0, 0], params.inertia[1, 1], params.inertia[2, 2]

    # Newton-Euler in the body frame; inertia is diagonal
    p_new = p + dt * (tx - (izz - iyy) * q * r) / ixx
    q_new = q + dt * (ty - (ixx - izz) * r * p) / iyy
    r_new = r + dt * (tz - (iyy - ixx) * p * q) / izz
    u_new = u + dt * (fb[0] / m - (q * w - r * v))
    v_new = v + dt * (fb[1] / m - (r * u - p * w))
    w_new = w + dt * ((fb[2] - thrust) / m - (p * v - q * u))

    rate_new = np.array([p_new, q_new, r_new])
    vel_new = np.array([u_new, v_new, w_new])
    att_new = wrap_angle(x[6:9] + dt * euler_rates(x[6:9], rate_new))
    pos_new = x[0:3] + dt * (R @ vel_new)
    return KinematicState(pos_new, vel_new, att_new, rate_new)


def max_lateral_accel(params: VehicleParams, max_tilt: float) -> float:
    """Lateral acceleration (m/s^2) at full thrust tilted by ``max_tilt``."""
    if not 0 < max_tilt < math.pi / 2:
        raise InvalidInputError("max_tilt must be in (0, pi/2)")
    return params.max_thrust * math.sin(max_tilt) / params.mass


def wind_thrust_fraction(wind: WindField, params: VehicleParams, max_tilt: float) -> float:
    """Wind force as a fraction of the available lateral force."""
    return wind.magnitude / (params.max_thrust * math.sin(max_tilt))


def calibrate_lateral_force(params: VehicleParams,
                            lateral_force: float = REFERENCE_LATERAL_FORCE,
                            max_tilt: float = REFERENCE_MAX_TILT) -> VehicleParams:
    """Return a copy whose rotor speed limit yields ``lateral_force`` at ``max_tilt``.

    Only the product ``k_f * max_rotor_speed**2`` matters, so ``k_f`` is kept
    and the speed limit is solved for.  For the default airframe the
    quoted 26.65 N leaves full thrust slightly below the hover thrust.
    """
    total = lateral_force / math.sin(max_tilt)
    speed = math.sqrt(total / (params.rotor_count * params.k_f))
    return replace(params, max_rotor_speed=speed, inertia=params.inertia.copy())
