"""Robustness studies: wind sweeps, reward spreads and action-direction symmetry."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .control import CascadeGains
from .dynamics import VehicleParams, WindField
from .env import EpisodeConfig
from .ppo import OBS_DIM, PolicyParameters, act
from .trajectory import PID_ONLY, RL_SUPERVISED, Trajectory, fly, score

HEADINGS = tuple(range(0, 360, 45))
HIST_BINS = 36


@dataclass
class Controller:
    """A named (gains, optional supervisor) pair to evaluate."""

    name: str
    gains: CascadeGains
    policy: PolicyParameters | None = None

    @property
    def mode(self) -> str:
        return PID_ONLY if self.policy is None else RL_SUPERVISED


def flight_rewards(ctrl: Controller, trajectory: Trajectory, wind: WindField, seeds,
                   config: EpisodeConfig | None = None,
                   params: VehicleParams | None = None) -> list[dict]:
    """Score one flight per seed."""
    out = []
    for s in seeds:
        outcomes = fly(trajectory, ctrl.mode, ctrl.gains, ctrl.policy, wind, config,
                       seed=int(s), params=params)
        sc = score(outcomes, len(trajectory))
        sc.pop("deviation")
        out.append(sc)
    return out


def _rows(ctrl, trajectory, conditions, seeds, config, params):
    rows = []
    for label, wind, heading in conditions:
        scores = flight_rewards(ctrl, trajectory, wind, seeds, config, params)
        r = np.array([s["total_reward"] for s in scores])
        rows.append({"controller": ctrl.name, "condition": label,
                     "magnitude": wind.magnitude, "heading": float(heading),
                     "mean_reward": float(r.mean()),
                     "std_reward": float(r.std()),
                     "mean_completion": float(np.mean([s["completion"] for s in scores])),
                     "rewards": r.tolist()})
    return rows


def heading_sweep(ctrl: Controller, trajectory: Trajectory, magnitude: float = 5.0,
                  seeds=range(10), headings=HEADINGS, config=None, params=None) -> list[dict]:
    """One row per heading (degrees from +x) at fixed wind magnitude."""
    conds = [(f"{magnitude:g}@{h:g}", WindField.from_heading(magnitude, h), h) for h in headings]
    return _rows(ctrl, trajectory, conds, seeds, config, params)


def magnitude_sweep(ctrl: Controller, trajectory: Trajectory, magnitudes=(0, 2, 4, 6, 8, 10),
                    heading: float = 90.0, seeds=range(10), config=None, params=None) -> list[dict]:
    conds = [(f"{m:g}@{heading:g}", WindField.from_heading(m, heading), heading) for m in magnitudes]
    return _rows(ctrl, trajectory, conds, seeds, config, params)


def reward_density(rewards, bins: int = 20, value_range=None) -> tuple[np.ndarray, np.ndarray]:
    """Normalised histogram ``(density, edges)`` of per-run rewards."""
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        raise ValueError("no rewards")
    if value_range is None:
        lo, hi = float(r.min()), float(r.max())
        value_range = (lo - 0.5, hi + 0.5) if lo == hi else (lo, hi)
    return np.histogram(r, bins=bins, range=value_range, density=True)


def across_heading_std(rows: list[dict]) -> float:
    return float(np.std([r["mean_reward"] for r in rows]))


def random_observations(n: int = 1000, seed: int = 0) -> np.ndarray:
    """Uniform samples of the normalised observation cube."""
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n, OBS_DIM))


def action_azimuths(policy: PolicyParameters, obs) -> np.ndarray:
    """Horizontal direction of each deterministic action, degrees in [0, 360)."""
    a = np.atleast_2d(act(policy, obs))
    return np.degrees(np.arctan2(a[:, 1], a[:, 0])) % 360.0


def azimuth_histogram(azimuths, bins: int = HIST_BINS) -> np.ndarray:
    counts, _ = np.histogram(np.asarray(azimuths) % 360.0, bins=bins, range=(0.0, 360.0))
    return counts.astype(float)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def shifted_similarity(hist_a, hist_b) -> tuple[np.ndarray, np.ndarray]:
    """Cosine similarity of ``hist_a`` with ``hist_b`` rotated by every bin.

    Returns ``(shift_degrees, similarity)``; shift ``s`` compares ``a`` with
    ``b`` turned ``s`` degrees counter-clockwise.
    """
    hist_a = np.asarray(hist_a, dtype=float)
    n = len(hist_a)
    shifts = np.arange(n) * (360.0 / n)
    sims = np.array([cosine_similarity(hist_a, np.roll(hist_b, k)) for k in range(n)])
    return shifts, sims


def rows_csv(rows: list[dict]) -> str:
    cols = ("controller", "condition", "magnitude", "heading", "mean_reward", "std_reward",
            "mean_completion")
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for r in rows:
        buf.write(",".join(str(r[c]) if isinstance(r[c], str) else repr(float(r[c])) for c in cols))
        buf.write("\n")
    return buf.getvalue()
