"""Flat ``key = value`` run configuration files.

Controller sections use the loop names and gain labels of the tuning
tables (``[Position] k_p``, ``[RL] steps u`` ...) so a tuned result can be
pasted straight into a file.  Every section is optional; missing keys keep
their defaults.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .control import CascadeGains, InvalidConfigError
from .dynamics import VehicleParams, WindField
from .env import EpisodeConfig
from .ppo import RlHyperparams

LOOP_SECTIONS = {"Position": "position", "Velocity": "velocity",
                 "Attitude": "attitude", "Rate": "rate"}
# label -> (target, attribute, type); target is "episode" or "rl"
RL_KEYS = {
    "batch size": ("rl", "batch_size", int),
    "learning rate": ("rl", "learning_rate", float),
    "epochs": ("rl", "n_epochs", int),
    "steps": ("rl", "n_steps", int),
    "scaling factor": ("episode", "scaling_factor", float),
    "steps u": ("episode", "steps_between_actions", int),
    "clip range": ("rl", "clip_ratio", float),
    "gamma": ("rl", "gamma", float),
    "gae lambda": ("rl", "gae_lambda", float),
    "entropy coef": ("rl", "ent_coef", float),
    "value coef": ("rl", "vf_coef", float),
    "max grad norm": ("rl", "max_grad_norm", float),
    "hidden": ("rl", "hidden", int),
    "init log std": ("rl", "init_log_std", float),
}
EPISODE_KEYS = {
    "bounding box": ("bounding_box", float),
    "dt": ("dt", float),
    "max time": ("max_time", float),
    "tip threshold deg": ("tip_threshold", float),
    "arrival radius": ("arrival_radius", float),
    "max velocity": ("max_velocity", float),
    "rate bound": ("rate_bound", float),
    "out of bounds margin": ("out_of_bounds_margin", float),
}
CONTROL_KEYS = {
    "sqrt scaling accel": "sqrt_scaling_accel",
    "leash": "leash_enabled",
    "altitude velocity k_p": "altitude_velocity.k_p",
    "altitude rate k_p": "altitude_rate.k_p",
}
VEHICLE_KEYS = ("mass", "arm_length", "rotor_count", "k_f", "k_m", "max_rotor_speed",
                "gravity", "rotor_mass", "inertia_xx", "inertia_yy", "inertia_zz")


@dataclass
class RunConfig:
    params: VehicleParams = field(default_factory=VehicleParams)
    gains: CascadeGains = field(default_factory=CascadeGains)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    rl: RlHyperparams = field(default_factory=RlHyperparams)
    wind: WindField = field(default_factory=WindField)


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep "k_p" and "Position" as written
    return cp


def _num(section: str, key: str, raw: str, kind=float):
    try:
        v = kind(float(raw)) if kind is int else float(raw)
    except ValueError:
        raise InvalidConfigError(f"[{section}] {key}: not a number: {raw!r}") from None
    if kind is int and float(raw) != int(float(raw)):
        raise InvalidConfigError(f"[{section}] {key}: expected an integer, got {raw!r}")
    if not math.isfinite(v):
        raise InvalidConfigError(f"[{section}] {key}: must be finite")
    return v


def _check_keys(cp, section, allowed):
    extra = set(cp[section]) - set(allowed)
    if extra:
        raise InvalidConfigError(f"[{section}] unknown keys: {sorted(extra)}")


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Read a configuration, overlaying it on ``base`` (defaults if omitted)."""
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise InvalidConfigError(f"malformed config: {e}") from None
    base = base or RunConfig()
    known = set(LOOP_SECTIONS) | {"Control", "RL", "Episode", "Vehicle", "Wind"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise InvalidConfigError(f"unknown sections: {sorted(unknown)}")

    flat = {}
    for sec, loop in LOOP_SECTIONS.items():
        if sec not in cp:
            continue
        allowed = ("k_p", "k_i", "k_d", "max_acc") if loop == "rate" else ("k_p", "k_i", "k_d")
        _check_keys(cp, sec, allowed)
        for k, raw in cp[sec].items():
            flat[f"{loop}.{k}"] = _num(sec, k, raw)
    if "Control" in cp:
        _check_keys(cp, "Control", CONTROL_KEYS)
        for k, raw in cp["Control"].items():
            if k == "leash":
                flat["leash_enabled"] = cp["Control"].getboolean(k)
            else:
                flat[CONTROL_KEYS[k]] = _num("Control", k, raw)
    gains = CascadeGains.from_flat(flat, base.gains)

    ep = dict((f.name, getattr(base.episode, f.name)) for f in fields(EpisodeConfig))
    rl = dict((f.name, getattr(base.rl, f.name)) for f in fields(RlHyperparams))
    if "RL" in cp:
        _check_keys(cp, "RL", RL_KEYS)
        for k, raw in cp["RL"].items():
            target, attr, kind = RL_KEYS[k]
            (ep if target == "episode" else rl)[attr] = _num("RL", k, raw, kind)
    if "Episode" in cp:
        _check_keys(cp, "Episode", EPISODE_KEYS)
        for k, raw in cp["Episode"].items():
            attr, kind = EPISODE_KEYS[k]
            v = _num("Episode", k, raw, kind)
            ep[attr] = math.radians(v) if attr == "tip_threshold" else v
    try:
        episode = EpisodeConfig(**ep)
        hp = RlHyperparams(**rl)
    except ValueError as e:
        raise InvalidConfigError(str(e)) from None

    params = base.params
    if "Vehicle" in cp:
        _check_keys(cp, "Vehicle", VEHICLE_KEYS)
        d = {k: v for k, v in params.to_dict().items()}
        d.update({k: _num("Vehicle", k, raw) for k, raw in cp["Vehicle"].items()})
        try:
            params = VehicleParams.from_dict(d)
        except ValueError as e:
            raise InvalidConfigError(str(e)) from None

    wind = base.wind
    if "Wind" in cp:
        _check_keys(cp, "Wind", ("magnitude", "heading"))
        mag = _num("Wind", "magnitude", cp["Wind"].get("magnitude", str(wind.magnitude)))
        head = _num("Wind", "heading", cp["Wind"].get("heading", str(wind.heading_deg)))
        wind = parse_wind(f"{mag}@{head}")
    return RunConfig(params, gains, episode, hp, wind)


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    return parse_config(Path(path).read_text(), base)


def bundled_config(name: str) -> RunConfig:
    """Load a configuration shipped with the package, e.g. ``supervised``."""
    path = resources.files("octorl.data").joinpath(f"{name}.ini")
    if not path.is_file():
        raise InvalidConfigError(f"no bundled config named {name!r}")
    return parse_config(path.read_text())


def format_config(cfg: RunConfig) -> str:
    """Write every setting; ``parse_config(format_config(c))`` reproduces ``c``."""
    cp = _parser()
    flat = cfg.gains.to_flat()
    for sec, loop in LOOP_SECTIONS.items():
        cp[sec] = {k: repr(float(flat[f"{loop}.{k}"])) for k in ("k_p", "k_i", "k_d")}
    cp["Rate"]["max_acc"] = repr(float(flat["rate.max_acc"]))
    cp["Control"] = {k: (str(bool(flat[v])).lower() if k == "leash" else repr(float(flat[v])))
                     for k, v in CONTROL_KEYS.items()}
    rl = {}
    for k, (target, attr, kind) in RL_KEYS.items():
        v = getattr(cfg.episode if target == "episode" else cfg.rl, attr)
        rl[k] = str(int(v)) if kind is int else repr(float(v))
    cp["RL"] = rl
    ep = {}
    for k, (attr, _) in EPISODE_KEYS.items():
        v = getattr(cfg.episode, attr)
        ep[k] = repr(math.degrees(v) if attr == "tip_threshold" else float(v))
    cp["Episode"] = ep
    cp["Vehicle"] = {k: repr(float(v)) if k != "rotor_count" else str(int(v))
                     for k, v in cfg.params.to_dict().items()}
    cp["Wind"] = {"magnitude": repr(cfg.wind.magnitude), "heading": repr(cfg.wind.heading_deg)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def parse_wind(spec: str) -> WindField:
    """``M@H``: magnitude in newtons, heading in degrees from +x, H in [0, 360)."""
    parts = str(spec).split("@")
    try:
        if len(parts) == 1:
            mag, head = float(parts[0]), 0.0
        elif len(parts) == 2:
            mag, head = float(parts[0]), float(parts[1])
        else:
            raise ValueError
    except ValueError:
        raise InvalidConfigError(f"bad wind spec {spec!r}; expected M@H, e.g. 5@90") from None
    if not (math.isfinite(mag) and mag >= 0):
        raise InvalidConfigError(f"wind magnitude must be finite and >= 0, got {mag}")
    if not (math.isfinite(head) and 0 <= head < 360):
        raise InvalidConfigError(f"wind heading must be in [0, 360), got {head}")
    return WindField.from_heading(mag, head)


def format_wind(wind: WindField) -> str:
    return f"{wind.magnitude:g}@{wind.heading_deg:g}"
