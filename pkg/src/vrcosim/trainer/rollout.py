"""Rollout collection, observation normalization and the rollout buffer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..bridge.errors import BridgeError
from .gae import compute_gae

COMPONENTS = ("S", "C_c", "C_d", "C_e")


class RunningMeanStd:
    """Streaming per-feature mean/variance (parallel Welford merge)."""

    def __init__(self, dim: int, clip: float = 10.0):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 1e-4
        self.clip = clip

    def update(self, x: np.ndarray) -> None:
        x = np.atleast_2d(x)
        b_mean = x.mean(axis=0)
        b_var = x.var(axis=0)
        b_count = x.shape[0]
        delta = b_mean - self.mean
        total = self.count + b_count
        self.mean = self.mean + delta * b_count / total
        m2 = self.var * self.count + b_var * b_count + delta * delta * self.count * b_count / total
        self.var = m2 / total
        self.count = total

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return np.clip((x - self.mean) / np.sqrt(self.var + 1e-8), -self.clip, self.clip)


class EnvFailure(RuntimeError):
    def __init__(self, env_index: int, cause: Exception, partial: "RolloutBuffer"):
        super().__init__(f"environment {env_index} failed: {cause}")
        self.env_index = env_index
        self.partial = partial


@dataclass
class RolloutBuffer:
    """Time-major storage, arrays shaped (T, n_envs, ...)."""

    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    components: dict[str, np.ndarray]
    last_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    length: int = 0
    episodes: list[dict] = field(default_factory=list)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @classmethod
    def allocate(cls, n_steps: int, n_envs: int, obs_dim: int, act_dim: int) -> "RolloutBuffer":
        z = lambda *s: np.zeros(s)
        return cls(z(n_steps, n_envs, obs_dim), z(n_steps, n_envs, act_dim), z(n_steps, n_envs),
                   z(n_steps, n_envs), z(n_steps, n_envs), z(n_steps, n_envs),
                   {c: z(n_steps, n_envs) for c in COMPONENTS}, np.zeros(n_envs))

    @property
    def capacity(self) -> int:
        return self.obs.shape[0]

    def compute_advantages(self, gamma: float, lam: float, reward_scale: float = 1.0) -> None:
        """GAE per env column; the value head learns returns of ``reward_scale * reward``."""
        T = self.length
        self.advantages = np.zeros((T, self.rewards.shape[1]))
        self.returns = np.zeros_like(self.advantages)
        for e in range(self.rewards.shape[1]):
            a, r = compute_gae(reward_scale * self.rewards[:T, e], self.values[:T, e], self.dones[:T, e], gamma,
                               lam, self.last_values[e])
            self.advantages[:, e] = a
            self.returns[:, e] = r

    def flat(self) -> dict[str, np.ndarray]:
        if self.advantages is None:
            raise RuntimeError("compute_advantages must run before the buffer is consumed")
        T = self.length
        flat = lambda a: a[:T].reshape(T * a.shape[1], *a.shape[2:])
        return {
            "obs": flat(self.obs),
            "actions": flat(self.actions),
            "logp": flat(self.logp),
            "advantages": flat(self.advantages),
            "returns": flat(self.returns),
        }

    def component_means(self) -> dict[str, float]:
        T = self.length
        return {c: float(self.components[c][:T].mean()) if T else 0.0 for c in COMPONENTS}


def collect_rollouts(policy, envs, obs_rms: RunningMeanStd, n_steps: int, rng: np.random.Generator,
                     seed_for, update_obs_stats: bool = True) -> RolloutBuffer:
    """Reset every env, then step all of them ``n_steps`` times with sampled actions.

    ``seed_for(env_index, episode_index)`` supplies the episode seeds; an env
    that finishes a round is reset with the next seed. Observations are
    stored normalized, exactly as the policy saw them.
    """
    n_envs = len(envs)
    episode_counter = [0] * n_envs
    raw = np.stack([env.reset(seed_for(i, 0)) for i, env in enumerate(envs)])
    buf = RolloutBuffer.allocate(n_steps, n_envs, raw.shape[1], policy.layout.act_dim)
    ep_reward = np.zeros(n_envs)
    for t in range(n_steps):
        if update_obs_stats:
            obs_rms.update(raw)
        x = obs_rms.normalize(raw)
        action, logp, value = policy.act(x, rng)
        buf.obs[t] = x
        buf.actions[t] = action
        buf.logp[t] = logp
        buf.values[t] = value
        next_raw = np.empty_like(raw)
        for i, env in enumerate(envs):
            try:
                o, r, done, log = env.step(np.clip(action[i], 0.0, 1.0))
            except (BridgeError, OSError) as exc:
                buf.length = t
                raise EnvFailure(i, exc, buf) from exc
            buf.rewards[t, i] = r
            buf.dones[t, i] = float(done)
            for c in COMPONENTS:
                buf.components[c][t, i] = log.get("reward/" + c, 0.0)
            ep_reward[i] += r
            if done:
                buf.episodes.append({"env": i, "reward": float(ep_reward[i]), "hits": int(log.get("hits", 0)),
                                     "misses": int(log.get("misses", 0))})
                ep_reward[i] = 0.0
                episode_counter[i] += 1
                o = env.reset(seed_for(i, episode_counter[i]))
            next_raw[i] = o
        raw = next_raw
        buf.length = t + 1
    _, last_values, _ = policy.forward(obs_rms.normalize(raw))
    buf.last_values = last_values
    return buf
