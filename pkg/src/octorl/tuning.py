"""Random-search tuning of controller gains and supervisor hyperparameters.

Each trial is scored by the mean total reward over the same ten evaluation
episodes.  Trials are appended to a JSON-lines log as they finish, so a
longer search with the same master seed resumes where a shorter one ended.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import CascadeGains, gain_names
from .dynamics import InvalidInputError, VehicleParams, WindField
from .env import EpisodeConfig, NavigationEnv, SimulationDiverged
from .ppo import NonFiniteLoss, PolicyParameters, RlHyperparams, act, train

SCHEMA_VERSION = 1
EVAL_SEEDS = tuple(range(10_000, 10_010))
PID_ONLY = "pid_only"
RL_SUPERVISED = "rl_supervised"
RL_KEYS = ("rl.batch_size", "rl.learning_rate", "rl.epochs", "rl.steps",
           "episode.scaling_factor", "episode.steps_u")


class InsufficientData(ValueError):
    pass


class SpaceError(ValueError):
    pass


@dataclass(frozen=True)
class Range:
    kind: str  # "uniform", "loguniform", "int" or "intlog"
    low: float
    high: float

    def __post_init__(self):
        if self.kind not in ("uniform", "loguniform", "int", "intlog"):
            raise SpaceError(f"unknown range kind {self.kind!r}")
        if not self.low <= self.high:
            raise SpaceError(f"empty range [{self.low}, {self.high}]")
        if self.kind in ("loguniform", "intlog") and self.low <= 0:
            raise SpaceError("log ranges must be strictly positive")

    def sample(self, rng: np.random.Generator):
        if self.kind == "uniform":
            return float(rng.uniform(self.low, self.high))
        if self.kind == "loguniform":
            return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))
        if self.kind == "int":
            return int(rng.integers(int(self.low), int(self.high) + 1))
        return int(round(math.exp(rng.uniform(math.log(self.low), math.log(self.high)))))


SearchSpace = dict  # name -> Range, insertion ordered

#: Nominal gains the PID ranges are centred on (a tenth to ten times each).
ANCHOR_GAINS = {
    "position.k_p": 1.0, "position.k_i": 0.05, "position.k_d": 0.05,
    "velocity.k_p": 1.0, "velocity.k_i": 0.2, "velocity.k_d": 0.05,
    "attitude.k_p": 6.0, "attitude.k_i": 0.05, "attitude.k_d": 0.05,
    "rate.k_p": 20.0, "rate.k_i": 0.5, "rate.k_d": 0.05,
    "rate.max_acc": 5.0,
}


def pid_space(anchor: dict | None = None, span: float = 10.0) -> SearchSpace:
    anchor = anchor or ANCHOR_GAINS
    return {k: Range("loguniform", anchor[k] / span, anchor[k] * span) for k in gain_names()}


def rl_space(anchor: dict | None = None) -> SearchSpace:
    space = pid_space(anchor)
    space.update({
        "rl.batch_size": Range("intlog", 32, 512),
        "rl.learning_rate": Range("loguniform", 1e-5, 1e-2),
        "rl.epochs": Range("int", 1, 10),
        "rl.steps": Range("intlog", 128, 4096),
        "episode.scaling_factor": Range("uniform", 0.01, 1.0),
        "episode.steps_u": Range("int", 1, 50),
    })
    return space


def parse_space(text: str, name: str = "space") -> SearchSpace:
    """Parse ``key = kind low high`` lines; ``#``/``;`` comments and ``[section]`` headers are skipped."""
    space = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise SpaceError(f"{name}:{lineno}: expected 'key = kind low high'")
        key, rhs = (s.strip() for s in line.split("=", 1))
        if key not in gain_names() and key not in RL_KEYS:
            raise SpaceError(f"{name}:{lineno}: unknown parameter {key!r}")
        parts = rhs.split()
        if len(parts) != 3:
            raise SpaceError(f"{name}:{lineno}: expected 'kind low high' for {key}")
        try:
            space[key] = Range(parts[0], float(parts[1]), float(parts[2]))
        except (ValueError, SpaceError) as exc:
            raise SpaceError(f"{name}:{lineno}: {exc}") from None
    if not space:
        raise SpaceError(f"{name}: empty search space")
    return space


def format_space(space: SearchSpace) -> str:
    return "".join(f"{k} = {r.kind} {r.low!r} {r.high!r}\n" for k, r in space.items())


def space_fingerprint(space: SearchSpace) -> str:
    return format_space(space)


@dataclass
class TrialRecord:
    trial_id: int
    params: dict
    seeds: list[int]
    rewards: list[float]
    mean_reward: float
    status: str = "ok"
    wall_time: float = field(default=0.0, compare=False)

    def to_json(self, master_seed: int, mode: str) -> str:
        return json.dumps({
            "schema": SCHEMA_VERSION, "master_seed": master_seed, "mode": mode,
            "trial_id": self.trial_id, "params": self.params, "seeds": self.seeds,
            "rewards": self.rewards, "mean_reward": self.mean_reward, "status": self.status,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "TrialRecord":
        d = json.loads(line)
        if d.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported trial log schema {d.get('schema')}")
        return cls(d["trial_id"], d["params"], d["seeds"], d["rewards"], d["mean_reward"],
                   d.get("status", "ok"))


@dataclass
class TrialSetup:
    """Everything a trial needs besides the sampled parameters."""

    mode: str = PID_ONLY
    wind: WindField = field(default_factory=WindField)
    config: EpisodeConfig = field(default_factory=EpisodeConfig)
    rl: RlHyperparams = field(default_factory=RlHyperparams)
    params: VehicleParams = field(default_factory=VehicleParams)
    base_gains: CascadeGains = field(default_factory=CascadeGains)
    train_episodes: int = 300
    eval_seeds: tuple = EVAL_SEEDS


def apply_assignment(assignment: dict, setup: TrialSetup):
    """Split a flat assignment into ``(gains, episode config, rl hyperparams)``."""
    gain_part = {k: v for k, v in assignment.items() if k in set(gain_names())}
    gains = CascadeGains.from_flat(gain_part, setup.base_gains)
    cfg = setup.config
    cfg = EpisodeConfig(**{**cfg.__dict__,
                           "scaling_factor": assignment.get("episode.scaling_factor", cfg.scaling_factor),
                           "steps_between_actions": assignment.get("episode.steps_u",
                                                                   cfg.steps_between_actions)})
    hp = setup.rl
    steps = int(assignment.get("rl.steps", hp.n_steps))
    hp = RlHyperparams(**{**hp.__dict__, "n_steps": steps,
                          "batch_size": min(int(assignment.get("rl.batch_size", hp.batch_size)), steps),
                          "learning_rate": float(assignment.get("rl.learning_rate", hp.learning_rate)),
                          "n_epochs": int(assignment.get("rl.epochs", hp.n_epochs))})
    return gains, cfg, hp


def evaluate(gains: CascadeGains, config: EpisodeConfig, wind: WindField,
             policy: PolicyParameters | None = None, seeds=EVAL_SEEDS,
             params: VehicleParams | None = None) -> list[float]:
    """Total reward of one episode per seed, PID-only when ``policy`` is None."""
    env = NavigationEnv(config, gains, params, wind)
    out = []
    for s in seeds:
        obs = env.reset(seed=int(s))
        while True:
            res = env.step(act(policy, obs) if policy is not None else np.zeros(3))
            obs = res.observation
            if res.done:
                break
        out.append(env.total_reward)
    return out


def worst_case(config: EpisodeConfig) -> float:
    return -20.0 * config.bounding_box


def run_trial(trial_id: int, assignment: dict, setup: TrialSetup, master_seed: int) -> TrialRecord:
    t0 = time.perf_counter()
    status = "ok"
    seeds = [int(s) for s in setup.eval_seeds]
    gains, cfg, hp = apply_assignment(assignment, setup)
    try:
        with np.errstate(all="ignore"):
            policy = None
            if setup.mode == RL_SUPERVISED:
                seed = int(np.random.SeedSequence([master_seed, trial_id, 1]).generate_state(1)[0])
                factory = lambda: NavigationEnv(cfg, gains, setup.params, setup.wind)  # noqa: E731
                policy = train(factory, hp, episodes=setup.train_episodes, seed=seed).params
            rewards = evaluate(gains, cfg, setup.wind, policy, seeds, setup.params)
    except (SimulationDiverged, NonFiniteLoss, FloatingPointError, InvalidInputError):
        status = "diverged"
        rewards = [worst_case(cfg)] * len(seeds)
    rewards = [float(r) for r in rewards]
    return TrialRecord(trial_id, assignment, seeds, rewards, float(np.mean(rewards)), status,
                       time.perf_counter() - t0)


def sample_assignment(space: SearchSpace, master_seed: int, trial_id: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, trial_id]))
    return {k: r.sample(rng) for k, r in space.items()}


def anchor_assignment(space: SearchSpace, setup: TrialSetup) -> dict:
    """The configuration the search is centred on, clipped into the space."""
    base = {**setup.base_gains.to_flat(), "rl.batch_size": setup.rl.batch_size,
            "rl.learning_rate": setup.rl.learning_rate, "rl.epochs": setup.rl.n_epochs,
            "rl.steps": setup.rl.n_steps,
            "episode.scaling_factor": setup.config.scaling_factor,
            "episode.steps_u": setup.config.steps_between_actions}
    out = {}
    for k, r in space.items():
        v = min(max(float(base[k]), r.low), r.high)
        out[k] = int(round(v)) if r.kind in ("int", "intlog") else v
    return out


def load_trials(path) -> list[TrialRecord]:
    p = Path(path)
    if not p.exists():
        return []
    return [TrialRecord.from_json(ln) for ln in p.read_text().splitlines() if ln.strip()]


def tune(space: SearchSpace, setup: TrialSetup, n_trials: int, seed: int = 0,
         log_path=None, include_anchor: bool = True, progress=None) -> list[TrialRecord]:
    """Random search; trial 0 is the anchor configuration when ``include_anchor``.

    With ``log_path`` the search is resumable: trials already in the log
    (same master seed and mode) are reused, new ones appended.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    done: dict[int, TrialRecord] = {}
    if log_path is not None:
        for line in (Path(log_path).read_text().splitlines() if Path(log_path).exists() else []):
            if not line.strip():
                continue
            d = json.loads(line)
            if d.get("master_seed") != seed or d.get("mode") != setup.mode:
                raise ValueError(f"{log_path} belongs to a different search")
            rec = TrialRecord.from_json(line)
            done[rec.trial_id] = rec
    records = []
    for i in range(n_trials):
        if i in done:
            records.append(done[i])
            continue
        if i == 0 and include_anchor:
            assignment = anchor_assignment(space, setup)
        else:
            assignment = sample_assignment(space, seed, i)
        rec = run_trial(i, assignment, setup, seed)
        if log_path is not None:
            with open(log_path, "a") as fh:
                fh.write(rec.to_json(seed, setup.mode) + "\n")
        records.append(rec)
        if progress is not None:
            progress(rec)
    return records


def best(records: list[TrialRecord]) -> TrialRecord:
    return max(records, key=lambda r: (r.mean_reward, -r.trial_id))


def _matrix(records, names):
    return np.array([[float(r.params[n]) for n in names] for r in records])


def importance(records: list[TrialRecord], names: list[str] | None = None, seed: int = 0,
               n_repeats: int = 10, min_trials: int = 30) -> dict[str, float]:
    """Permutation importance of each parameter on a random-forest surrogate.

    Scores are the clipped increases in surrogate squared error when a
    column is shuffled, normalised to sum to one.  Without signal
    (constant scores or no positive increase) the result is uniform.
    """
    from sklearn.ensemble import RandomForestRegressor
    from sklearn.inspection import permutation_importance

    if len(records) < min_trials:
        raise InsufficientData(f"need at least {min_trials} trials, got {len(records)}")
    names = list(names or records[0].params.keys())
    X = _matrix(records, names)
    y = np.array([r.mean_reward for r in records])
    uniform = {n: 1.0 / len(names) for n in names}
    if np.ptp(y) == 0:
        return uniform
    model = RandomForestRegressor(n_estimators=200, random_state=seed, min_samples_leaf=2)
    model.fit(X, y)
    res = permutation_importance(model, X, y, scoring="neg_mean_squared_error",
                                 n_repeats=n_repeats, random_state=seed)
    imp = np.clip(res.importances_mean, 0.0, None)
    if imp.sum() <= 0:
        return uniform
    imp = imp / imp.sum()
    return {n: float(v) for n, v in zip(names, imp)}


def top_table(records: list[TrialRecord], k: int = 10, names: list[str] | None = None) -> dict:
    """Mean and relative standard deviation (% of mean) of each parameter over the top ``k``."""
    if len(records) < k:
        raise InsufficientData(f"need at least {k} trials")
    top = sorted(records, key=lambda r: (-r.mean_reward, r.trial_id))[:k]
    names = list(names or top[0].params.keys())
    X = _matrix(top, names)
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1) if k > 1 else np.zeros(len(names))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(mean != 0, 100.0 * std / np.abs(mean), 0.0)
    return {n: (float(m), float(s)) for n, m, s in zip(names, mean, rel)}


def percent_change(a: float, b: float) -> float:
    return 100.0 * (b - a) / a


def is_notable(change: float, std_a: float, std_b: float) -> bool:
    """A change is notable when it exceeds both conditions' relative spreads."""
    return abs(change) > std_a and abs(change) > std_b


def compare_tables(table_a: dict, table_b: dict) -> dict:
    out = {}
    for n in table_a:
        (ma, sa), (mb, sb) = table_a[n], table_b[n]
        ch = percent_change(ma, mb)
        out[n] = {"mean_a": ma, "std_a": sa, "mean_b": mb, "std_b": sb, "change": ch,
                  "notable": is_notable(ch, sa, sb)}
    return out


def table_csv(table: dict) -> str:
    if table and isinstance(next(iter(table.values())), dict):
        lines = ["param,mean_a,std_a_pct,mean_b,std_b_pct,change_pct,notable"]
        for n, r in table.items():
            lines.append(f"{n},{r['mean_a']!r},{r['std_a']!r},{r['mean_b']!r},{r['std_b']!r},"
                         f"{r['change']!r},{r['notable']}")
    else:
        lines = ["param,mean,std_pct"]
        lines += [f"{n},{m!r},{s!r}" for n, (m, s) in table.items()]
    return "\n".join(lines) + "\n"
