"""Actor-critic policy and clipped-surrogate policy optimisation in numpy.

Both networks are two tanh hidden layers.  The actor emits the mean of a
diagonal Gaussian over pre-squash actions ``u``; executed actions are
``tanh(u)`` so they always land in ``[-1, 1]^3``.  The log-std vector is a
free parameter shared by all states.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

OBS_DIM = 12
ACT_DIM = 3
CHECKPOINT_MAGIC = b"OCTORL-POLICY"
CHECKPOINT_VERSION = 1
_LOG_2PI = math.log(2.0 * math.pi)

ACTOR_LAYERS = ("pi_w1", "pi_b1", "pi_w2", "pi_b2", "pi_w3", "pi_b3", "log_std")
CRITIC_LAYERS = ("vf_w1", "vf_b1", "vf_w2", "vf_b2", "vf_w3", "vf_b3")
LAYERS = ACTOR_LAYERS + CRITIC_LAYERS


class CheckpointError(ValueError):
    pass


class ShapeMismatch(CheckpointError):
    pass


def layer_shapes(hidden: int = 128, obs_dim: int = OBS_DIM, act_dim: int = ACT_DIM) -> dict:
    return {
        "pi_w1": (hidden, obs_dim), "pi_b1": (hidden,),
        "pi_w2": (hidden, hidden), "pi_b2": (hidden,),
        "pi_w3": (act_dim, hidden), "pi_b3": (act_dim,),
        "log_std": (act_dim,),
        "vf_w1": (hidden, obs_dim), "vf_b1": (hidden,),
        "vf_w2": (hidden, hidden), "vf_b2": (hidden,),
        "vf_w3": (1, hidden), "vf_b3": (1,),
    }


@dataclass
class PolicyParameters:
    weights: dict[str, np.ndarray]
    version: int = 0

    @property
    def hidden(self) -> int:
        return self.weights["pi_w1"].shape[0]

    @classmethod
    def zeros(cls, hidden: int = 128) -> "PolicyParameters":
        return cls({k: np.zeros(s) for k, s in layer_shapes(hidden).items()})

    @classmethod
    def initial(cls, seed: int = 0, hidden: int = 128, log_std: float = 0.0) -> "PolicyParameters":
        """Orthogonal initialisation: gain sqrt(2) hidden, 0.01 actor head, 1 value head."""
        rng = np.random.default_rng(seed)
        w = {}
        for name, shape in layer_shapes(hidden).items():
            if name == "log_std":
                w[name] = np.full(shape, float(log_std))
            elif len(shape) == 1:
                w[name] = np.zeros(shape)
            else:
                gain = {"pi_w3": 0.01, "vf_w3": 1.0}.get(name, math.sqrt(2.0))
                w[name] = gain * _orthogonal(shape, rng)
        return cls(w)

    def copy(self) -> "PolicyParameters":
        return PolicyParameters({k: v.copy() for k, v in self.weights.items()}, self.version)

    def n_params(self) -> int:
        return sum(v.size for v in self.weights.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weights[k].ravel() for k in LAYERS])

    def with_flat(self, flat) -> "PolicyParameters":
        out, i = {}, 0
        for k in LAYERS:
            n = self.weights[k].size
            out[k] = np.asarray(flat[i:i + n], dtype=float).reshape(self.weights[k].shape).copy()
            i += n
        return PolicyParameters(out, self.version)


def _orthogonal(shape, rng):
    a = rng.normal(size=(max(shape), min(shape)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if q.shape == tuple(shape) else q.T


@dataclass
class RlHyperparams:
    learning_rate: float = 1e-3
    batch_size: int = 128
    n_epochs: int = 5
    n_steps: int = 512
    clip_ratio: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    ent_coef: float = 0.0
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    hidden: int = 128
    init_log_std: float = -0.5

    def __post_init__(self):
        self.batch_size = int(self.batch_size)
        self.n_epochs = int(self.n_epochs)
        self.n_steps = int(self.n_steps)
        self.hidden = int(self.hidden)
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not self.clip_ratio > 0:
            raise ValueError("clip_ratio must be positive")
        if not 1 <= self.batch_size <= self.n_steps:
            raise ValueError("batch_size must be in [1, n_steps]")


def _actor_hidden(w, obs):
    h1 = np.tanh(obs @ w["pi_w1"].T + w["pi_b1"])
    h2 = np.tanh(h1 @ w["pi_w2"].T + w["pi_b2"])
    return h1, h2


def _critic_hidden(w, obs):
    g1 = np.tanh(obs @ w["vf_w1"].T + w["vf_b1"])
    g2 = np.tanh(g1 @ w["vf_w2"].T + w["vf_b2"])
    return g1, g2


def _raw_forward(params: PolicyParameters, obs):
    w = params.weights
    obs = np.asarray(obs, dtype=float)
    if obs.shape[-1] != w["pi_w1"].shape[1]:
        raise ValueError(f"observation has {obs.shape[-1]} features, "
                         f"network expects {w['pi_w1'].shape[1]}")
    _, h2 = _actor_hidden(w, obs)
    _, g2 = _critic_hidden(w, obs)
    mean_raw = h2 @ w["pi_w3"].T + w["pi_b3"]
    value = (g2 @ w["vf_w3"].T + w["vf_b3"])[..., 0]
    return mean_raw, value


def policy_forward(params: PolicyParameters, obs):
    """Return ``(tanh(mean), log_std, value)`` for one observation or a batch."""
    mean_raw, value = _raw_forward(params, obs)
    return np.tanh(mean_raw), params.weights["log_std"].copy(), value


def act(params: PolicyParameters, obs) -> np.ndarray:
    """Deterministic supervisory action used when operating."""
    return policy_forward(params, obs)[0]


def gaussian_log_prob(u, mean_raw, log_std):
    z = (u - mean_raw) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * _LOG_2PI, axis=-1)


def squash_correction(u):
    """``sum log(1 - tanh(u)^2)``, computed stably."""
    return np.sum(2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u)), axis=-1)


def sample_action(params: PolicyParameters, obs, rng: np.random.Generator):
    """Sample ``(action, u, log_prob, value)``; ``log_prob`` includes the tanh correction."""
    mean_raw, value = _raw_forward(params, obs)
    log_std = params.weights["log_std"]
    u = mean_raw + np.exp(log_std) * rng.standard_normal(mean_raw.shape)
    logp = gaussian_log_prob(u, mean_raw, log_std) - squash_correction(u)
    return np.tanh(u), u, logp, value


def gae(rewards, values, dones, gamma: float, lam: float, last_value: float = 0.0):
    """Generalised advantage estimates and bootstrapped returns.

    ``dones[t]`` marks that the episode ended after step ``t``; ``last_value``
    bootstraps the step after the final entry when it is not terminal.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    T = len(rewards)
    adv = np.zeros(T)
    running = 0.0
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        next_value = last_value if t == T - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv, adv + values


def normalize_advantages(adv):
    adv = np.asarray(adv, dtype=float)
    return (adv - adv.mean()) / (adv.std() + 1e-8)


@dataclass
class RolloutBuffer:
    obs: list = field(default_factory=list)
    u: list = field(default_factory=list)
    log_prob: list = field(default_factory=list)
    reward: list = field(default_factory=list)
    value: list = field(default_factory=list)
    done: list = field(default_factory=list)

    def add(self, obs, u, log_prob, reward, value, done):
        if not math.isfinite(reward):
            raise ValueError("non-finite reward")
        self.obs.append(np.asarray(obs, dtype=float))
        self.u.append(np.asarray(u, dtype=float))
        self.log_prob.append(float(log_prob))
        self.reward.append(float(reward))
        self.value.append(float(value))
        self.done.append(bool(done))

    def __len__(self):
        return len(self.reward)

    def arrays(self):
        return (np.array(self.obs), np.array(self.u), np.array(self.log_prob),
                np.array(self.reward), np.array(self.value), np.array(self.done, dtype=float))


def ppo_loss_and_grad(params: PolicyParameters, obs, u, old_log_prob, adv, returns,
                      clip_ratio: float, vf_coef: float, ent_coef: float,
                      parts: tuple[str, ...] = ("policy", "value", "entropy")):
    """Loss to minimise and its gradient, by backpropagation.

    loss = -mean(min(rho A, clip(rho) A)) + vf_coef * mean((V - R)^2) - ent_coef * H

    ``parts`` selects which terms enter the loss; used by gradient checks.
    """
    w = params.weights
    n = len(adv)
    obs = np.asarray(obs, dtype=float)
    h1, h2 = _actor_hidden(w, obs)
    g1, g2 = _critic_hidden(w, obs)
    mean_raw = h2 @ w["pi_w3"].T + w["pi_b3"]
    value = (g2 @ w["vf_w3"].T + w["vf_b3"])[:, 0]
    log_std = w["log_std"]
    inv_var = np.exp(-2.0 * log_std)
    diff = u - mean_raw
    logp = gaussian_log_prob(u, mean_raw, log_std) - squash_correction(u)

    ratio = np.exp(logp - old_log_prob)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv
    policy_obj = float(np.mean(np.minimum(surr1, surr2)))
    value_loss = float(np.mean((value - returns) ** 2))
    entropy = float(np.sum(log_std + 0.5 * (_LOG_2PI + 1.0)))

    grads = {k: np.zeros_like(v) for k, v in w.items()}
    loss = 0.0
    d_logp = np.zeros(n)
    if "policy" in parts:
        loss -= policy_obj
        d_logp = -np.where(surr1 <= surr2, surr1, 0.0) / n
    d_mean = d_logp[:, None] * diff * inv_var
    grads["log_std"] = d_logp @ (diff * diff * inv_var - 1.0)
    if "entropy" in parts:
        loss -= ent_coef * entropy
        grads["log_std"] -= ent_coef

    grads["pi_w3"] = d_mean.T @ h2
    grads["pi_b3"] = d_mean.sum(axis=0)
    dz2 = (d_mean @ w["pi_w3"]) * (1.0 - h2 * h2)
    grads["pi_w2"] = dz2.T @ h1
    grads["pi_b2"] = dz2.sum(axis=0)
    dz1 = (dz2 @ w["pi_w2"]) * (1.0 - h1 * h1)
    grads["pi_w1"] = dz1.T @ obs
    grads["pi_b1"] = dz1.sum(axis=0)

    if "value" in parts:
        loss += vf_coef * value_loss
        dv = (vf_coef * 2.0 / n) * (value - returns)
    else:
        dv = np.zeros(n)
    grads["vf_w3"] = dv[None, :] @ g2
    grads["vf_b3"] = np.array([dv.sum()])
    dy2 = np.outer(dv, w["vf_w3"][0]) * (1.0 - g2 * g2)
    grads["vf_w2"] = dy2.T @ g1
    grads["vf_b2"] = dy2.sum(axis=0)
    dy1 = (dy2 @ w["vf_w2"]) * (1.0 - g1 * g1)
    grads["vf_w1"] = dy1.T @ obs
    grads["vf_b1"] = dy1.sum(axis=0)

    clipped = np.abs(ratio - 1.0) > clip_ratio
    diag = {"loss": loss, "policy_objective": policy_obj, "value_loss": value_loss,
            "entropy": entropy, "clip_fraction": float(np.mean(clipped)),
            "approx_kl": float(np.mean(old_log_prob - logp))}
    return loss, grads, diag


class Adam:
    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, weights: dict, grads: dict):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            weights[k] = weights[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class NonFiniteLoss(FloatingPointError):
    def __init__(self, diagnostics):
        super().__init__(f"non-finite PPO loss: {diagnostics}")
        self.diagnostics = diagnostics


def ppo_update(params: PolicyParameters, buffer: RolloutBuffer, hp: RlHyperparams,
               rng: np.random.Generator, last_value: float = 0.0,
               optimizer: Adam | None = None):
    """Several epochs of minibatch Adam steps on the clipped surrogate.

    Returns ``(new_params, diagnostics)``; the input parameters are not
    modified.  A non-finite loss aborts the update with ``NonFiniteLoss``.
    """
    obs, u, logp, rewards, values, dones = buffer.arrays()
    adv, returns = gae(rewards, values, dones, hp.gamma, hp.gae_lambda, last_value)
    adv = normalize_advantages(adv)
    new = params.copy()
    opt = optimizer or Adam(hp.learning_rate)
    n = len(rewards)
    history = []
    for _ in range(hp.n_epochs):
        order = rng.permutation(n)
        for start in range(0, n, hp.batch_size):
            idx = order[start:start + hp.batch_size]
            loss, grads, diag = ppo_loss_and_grad(new, obs[idx], u[idx], logp[idx], adv[idx],
                                                  returns[idx], hp.clip_ratio, hp.vf_coef,
                                                  hp.ent_coef)
            if not math.isfinite(loss):
                raise NonFiniteLoss(diag)
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if norm > hp.max_grad_norm:
                scale = hp.max_grad_norm / (norm + 1e-12)
                grads = {k: g * scale for k, g in grads.items()}
            opt.step(new.weights, grads)
            history.append(diag)
    new.version = params.version + 1
    keys = history[0].keys() if history else ()
    summary = {k: float(np.mean([h[k] for h in history])) for k in keys}
    return new, summary


@dataclass
class TrainingResult:
    params: PolicyParameters
    curve: list[dict]

    def curve_csv(self) -> str:
        cols = ("update", "episodes", "mean_episode_reward", "loss", "policy_objective",
                "value_loss", "entropy", "clip_fraction", "approx_kl")
        lines = [",".join(cols)]
        for row in self.curve:
            lines.append(",".join(repr(float(row[c])) if c not in ("update", "episodes")
                                  else str(int(row[c])) for c in cols))
        return "\n".join(lines) + "\n"


def train(env_factory, hp: RlHyperparams, episodes: int | None = None,
          total_steps: int | None = None, seed: int = 0,
          initial: PolicyParameters | None = None, progress=None) -> TrainingResult:
    """Alternate rollout collection and PPO updates until the budget is used.

    The budget is a number of finished episodes and/or supervisory steps;
    collection always completes the current rollout of ``hp.n_steps`` before
    updating, so the final update may overshoot the budget.  Everything is
    seeded from ``seed``.
    """
    if episodes is None and total_steps is None:
        raise ValueError("give an episode or step budget")
    ss = np.random.SeedSequence(seed)
    init_seed, act_seed, env_seed, shuffle_seed = ss.generate_state(4)
    params = initial.copy() if initial is not None else PolicyParameters.initial(
        int(init_seed), hp.hidden, hp.init_log_std)
    act_rng = np.random.default_rng(act_seed)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    episode_seeds = np.random.default_rng(env_seed)
    optimizer = Adam(hp.learning_rate)

    def over_budget(ep, st):
        return (episodes is not None and ep >= episodes) or (total_steps is not None and st >= total_steps)

    curve = []
    env = env_factory()
    n_episodes = n_steps = 0
    if over_budget(0, 0):
        return TrainingResult(params, curve)
    obs = env.reset(seed=int(episode_seeds.integers(2**31)))
    ep_return = 0.0
    while not over_budget(n_episodes, n_steps):
        buf = RolloutBuffer()
        finished = []
        for _ in range(hp.n_steps):
            a, u, logp, value = sample_action(params, obs, act_rng)
            res = env.step(a)
            buf.add(obs, u, logp, res.reward, value, res.done)
            ep_return += res.reward
            n_steps += 1
            if res.done:
                finished.append(ep_return)
                n_episodes += 1
                ep_return = 0.0
                obs = env.reset(seed=int(episode_seeds.integers(2**31)))
            else:
                obs = res.observation
        last_value = 0.0 if buf.done[-1] else float(_raw_forward(params, obs)[1])
        params, diag = ppo_update(params, buf, hp, shuffle_rng, last_value, optimizer)
        row = {"update": len(curve), "episodes": n_episodes,
               "mean_episode_reward": float(np.mean(finished)) if finished else float("nan")}
        row.update(diag)
        curve.append(row)
        if progress is not None:
            progress(row)
    return TrainingResult(params, curve)


def save_checkpoint(params: PolicyParameters) -> bytes:
    """Serialise to ``magic | header length | JSON header | float64 LE payload``."""
    header = {"version": CHECKPOINT_VERSION, "policy_version": params.version,
              "layers": [[k, list(params.weights[k].shape)] for k in LAYERS]}
    hbytes = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(np.ascontiguousarray(params.weights[k], dtype="<f8").tobytes()
                       for k in LAYERS)
    return CHECKPOINT_MAGIC + struct.pack("<I", len(hbytes)) + hbytes + payload


def load_checkpoint(data: bytes, hidden: int | None = None) -> PolicyParameters:
    """Inverse of ``save_checkpoint``; ``hidden`` enforces the runtime width."""
    m = len(CHECKPOINT_MAGIC)
    if len(data) < m + 4 or data[:m] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a policy checkpoint")
    (hlen,) = struct.unpack("<I", data[m:m + 4])
    try:
        header = json.loads(data[m + 4:m + 4 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    layers = [(k, tuple(s)) for k, s in header["layers"]]
    if [k for k, _ in layers] != list(LAYERS):
        raise CheckpointError("checkpoint layer list does not match policy layout")
    if hidden is not None:
        expected = layer_shapes(hidden)
        for k, s in layers:
            if s != expected[k]:
                raise ShapeMismatch(f"layer {k}: checkpoint shape {s}, runtime expects {expected[k]}")
    payload = data[m + 4 + hlen:]
    need = 8 * sum(int(np.prod(s)) for _, s in layers)
    if len(payload) != need:
        raise CheckpointError(f"checkpoint payload is {len(payload)} bytes, expected {need}")
    weights, i = {}, 0
    for k, s in layers:
        n = 8 * int(np.prod(s))
        weights[k] = np.frombuffer(payload[i:i + n], dtype="<f8").astype(float).reshape(s)
        i += n
    return PolicyParameters(weights, int(header.get("policy_version", 0)))
