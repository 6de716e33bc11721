"""Gaussian MLP actor-critic in plain numpy with hand-written backprop.

All parameters live in one flat float64 vector; named views expose the layer
matrices. Hidden layers are tanh and shared by both heads. The action mean is
``sigmoid(head)`` so it always lies in (0, 1); the log standard deviation is a
state-independent parameter vector. Sampled actions are clipped to [0, 1] by
the environment, log-probabilities are taken before clipping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Layout:
    obs_dim: int
    act_dim: int
    hidden: tuple[int, ...]

    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        out = []
        prev = self.obs_dim
        for i, h in enumerate(self.hidden):
            out += [(f"W{i}", (prev, h)), (f"b{i}", (h,))]
            prev = h
        out += [
            ("W_pi", (prev, self.act_dim)),
            ("b_pi", (self.act_dim,)),
            ("W_v", (prev, 1)),
            ("b_v", (1,)),
            ("log_std", (self.act_dim,)),
        ]
        return out

    @property
    def size(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.shapes())


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    a = rng.standard_normal((max(shape), min(shape)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q[: shape[0], : shape[1]]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Policy:
    def __init__(self, layout: Layout, flat: np.ndarray | None = None):
        self.layout = layout
        self.flat = np.zeros(layout.size) if flat is None else np.asarray(flat, dtype=np.float64).copy()
        if self.flat.shape != (layout.size,):
            raise ValueError(f"expected {layout.size} parameters, got {self.flat.shape}")
        self.views = self._views(self.flat)

    def _views(self, vec: np.ndarray) -> dict[str, np.ndarray]:
        out, off = {}, 0
        for name, shape in self.layout.shapes():
            n = int(np.prod(shape))
            out[name] = vec[off : off + n].reshape(shape)
            off += n
        return out

    @classmethod
    def initialize(cls, layout: Layout, rng: np.random.Generator, init_log_std: float = -1.0) -> "Policy":
        p = cls(layout)
        v = p.views
        for i in range(len(layout.hidden)):
            v[f"W{i}"][...] = _orthogonal(rng, v[f"W{i}"].shape, math.sqrt(2.0))
        v["W_pi"][...] = _orthogonal(rng, v["W_pi"].shape, 0.01)
        v["W_v"][...] = _orthogonal(rng, v["W_v"].shape, 1.0)
        v["log_std"][...] = init_log_std
        return p

    def copy(self) -> "Policy":
        return Policy(self.layout, self.flat)

    # -- forward -----------------------------------------------------------
    def forward(self, obs: np.ndarray):
        """Return (mean, value, cache) for a batch of normalized observations."""
        v = self.views
        x = np.atleast_2d(obs)
        acts = [x]
        for i in range(len(self.layout.hidden)):
            x = np.tanh(x @ v[f"W{i}"] + v[f"b{i}"])
            acts.append(x)
        mean = _sigmoid(x @ v["W_pi"] + v["b_pi"])
        value = (x @ v["W_v"] + v["b_v"])[:, 0]
        return mean, value, acts

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None):
        """Sample (or take the mean when ``rng`` is None); returns (action, logp, value)."""
        mean, value, _ = self.forward(obs)
        std = np.exp(self.views["log_std"])
        if rng is None:
            action = mean
        else:
            action = mean + std * rng.standard_normal(mean.shape)
        return action, self.log_prob(action, mean), value

    def log_prob(self, action: np.ndarray, mean: np.ndarray) -> np.ndarray:
        log_std = self.views["log_std"]
        z = (action - mean) * np.exp(-log_std)
        return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * self.layout.act_dim * LOG_2PI

    def entropy(self) -> float:
        return float(np.sum(self.views["log_std"]) + 0.5 * self.layout.act_dim * (LOG_2PI + 1.0))

    # -- loss --------------------------------------------------------------
    def ppo_loss(self, obs, actions, old_logp, advantages, returns,
                 clip_eps: float, value_coef: float, entropy_coef: float, need_grad: bool = True):
        """Clipped-surrogate PPO loss, its gradient (flat) and diagnostics.

        ``loss = -mean(min(rho*A, clip(rho)*A)) + value_coef*mean((V-R)^2) - entropy_coef*H``
        """
        n = len(obs)
        mean, value, acts = self.forward(obs)
        log_std = self.views["log_std"]
        inv_var = np.exp(-2.0 * log_std)
        logp = self.log_prob(actions, mean)
        log_ratio = logp - old_logp
        ratio = np.exp(log_ratio)
        clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
        surr1 = ratio * advantages
        surr2 = clipped * advantages
        policy_loss = -float(np.mean(np.minimum(surr1, surr2)))
        value_err = value - returns
        value_loss = float(np.mean(value_err * value_err))
        entropy = self.entropy()
        loss = policy_loss + value_coef * value_loss - entropy_coef * entropy
        stats = {
            "policy_loss": policy_loss,
            "value_loss": value_loss,
            "entropy": entropy,
            "approx_kl": float(np.mean((ratio - 1.0) - log_ratio)),
            "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
            "loss": loss,
        }
        if not need_grad:
            return loss, None, stats

        grad = np.zeros_like(self.flat)
        g = self._views(grad)
        # d loss / d logp: only where the unclipped branch is the minimum
        use_unclipped = surr1 <= surr2
        d_logp = np.where(use_unclipped, -surr1 / n, 0.0)
        diff = actions - mean
        d_mean = d_logp[:, None] * diff * inv_var
        g["log_std"][...] = np.sum(d_logp[:, None] * (diff * diff * inv_var - 1.0), axis=0) - entropy_coef
        d_head = d_mean * mean * (1.0 - mean)
        d_value = (2.0 * value_coef / n) * value_err
        h = acts[-1]
        g["W_pi"][...] = h.T @ d_head
        g["b_pi"][...] = d_head.sum(axis=0)
        g["W_v"][...] = h.T @ d_value[:, None]
        g["b_v"][...] = d_value.sum()
        dh = d_head @ self.views["W_pi"].T + d_value[:, None] @ self.views["W_v"].T
        for i in reversed(range(len(self.layout.hidden))):
            dz = dh * (1.0 - acts[i + 1] ** 2)
            g[f"W{i}"][...] = acts[i].T @ dz
            g[f"b{i}"][...] = dz.sum(axis=0)
            if i:
                dh = dz @ self.views[f"W{i}"].T
        return loss, grad, stats
