"""PPO update: Adam, learning-rate schedule and the epoch/minibatch loop."""
from __future__ import annotations

import numpy as np

from .config import PpoConfig
from .gae import normalize_advantages
from .policy import Policy


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


def lr_schedule(step: int, total: int, cfg: PpoConfig) -> float:
    """Constant ``lr_initial`` until the decay start, then linear to ``lr_final`` at ``total``."""
    if not 0 <= step <= total:
        raise ValueError("step must lie in [0, total]")
    start = cfg.lr_decay_start_fraction * total
    if step < start or total == start:
        return cfg.lr_initial
    frac = (step - start) / (total - start)
    return cfg.lr_initial + (cfg.lr_final - cfg.lr_initial) * frac


class Adam:
    def __init__(self, size: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state(self) -> tuple[np.ndarray, np.ndarray, int]:
        return self.m.copy(), self.v.copy(), self.t

    def restore(self, state) -> None:
        m, v, t = state
        self.m, self.v, self.t = m.copy(), v.copy(), int(t)


def ppo_update(policy: Policy, adam: Adam, batch: dict[str, np.ndarray], cfg: PpoConfig, lr: float,
               rng: np.random.Generator) -> dict[str, float]:
    """Run up to ``cfg.n_epochs`` epochs of minibatch Adam on the clipped surrogate.

    After every epoch the KL to the collecting policy is measured on the full
    batch; an epoch that pushes it beyond ``kl_limit`` is rolled back and the
    loop stops, so the retained parameters always satisfy the limit.
    ``batch`` holds flat arrays ``obs, actions, logp, advantages, returns``.
    """
    obs = batch["obs"]
    actions = batch["actions"]
    old_logp = batch["logp"]
    adv = normalize_advantages(batch["advantages"])
    returns = batch["returns"]
    n = len(obs)
    args = (cfg.clip_epsilon, cfg.value_coef, cfg.entropy_coef)

    sums: dict[str, float] = {}
    n_minibatches = 0
    epochs_done = 0
    stopped_early = False
    kl = 0.0
    for _ in range(cfg.n_epochs):
        saved = (policy.flat.copy(), adam.state())
        epoch_sums: dict[str, float] = {}
        epoch_mb = 0
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grad, stats = policy.ppo_loss(obs[idx], actions[idx], old_logp[idx], adv[idx], returns[idx], *args)
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                raise TrainingDiverged(f"non-finite loss {loss}")
            norm = float(np.sqrt(grad @ grad))
            if cfg.max_grad_norm and norm > cfg.max_grad_norm:
                grad = grad * (cfg.max_grad_norm / norm)
            adam.step(policy.flat, grad, lr)
            for k, v in stats.items():
                epoch_sums[k] = epoch_sums.get(k, 0.0) + v
            epoch_mb += 1
        _, _, full = policy.ppo_loss(obs, actions, old_logp, adv, returns, *args, need_grad=False)
        if not np.isfinite(full["loss"]):
            raise TrainingDiverged("non-finite loss after epoch")
        if full["approx_kl"] > cfg.kl_limit:
            policy.flat[:] = saved[0]
            adam.restore(saved[1])
            stopped_early = True
            break
        kl = full["approx_kl"]
        for k, v in epoch_sums.items():
            sums[k] = sums.get(k, 0.0) + v
        n_minibatches += epoch_mb
        epochs_done += 1

    out = {k: v / n_minibatches for k, v in sums.items()} if n_minibatches else {
        "policy_loss": 0.0, "value_loss": 0.0, "entropy": policy.entropy(), "clip_fraction": 0.0, "loss": 0.0,
    }
    out["approx_kl"] = kl
    out["epochs"] = epochs_done
    out["stopped_early"] = stopped_early
    out["lr"] = lr
    return out
