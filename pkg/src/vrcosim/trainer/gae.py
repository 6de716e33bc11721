"""Generalized advantage estimation."""
from __future__ import annotations

import numpy as np


def compute_gae(rewards, values, dones, gamma: float, lam: float, last_value: float = 0.0):
    """Backward GAE recursion over one trajectory segment.

    ``values[t]`` is V(s_t); ``last_value`` bootstraps the state after the
    final step. ``dones[t]`` marks that step ``t`` ended an episode, cutting
    both the bootstrap and the advantage trace.

    Returns ``(advantages, returns)`` with ``returns = advantages + values``.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    if not (r.shape == v.shape == d.shape) or r.ndim != 1:
        raise ValueError("rewards, values and dones must be equal-length 1-D sequences")
    adv = np.zeros_like(r)
    next_value = float(last_value)
    running = 0.0
    for t in range(len(r) - 1, -1, -1):
        keep = 1.0 - d[t]
        delta = r[t] + gamma * next_value * keep - v[t]
        running = delta + gamma * lam * keep * running
        adv[t] = running
        next_value = v[t]
    return adv, adv + v


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    adv = np.asarray(adv, dtype=np.float64)
    if adv.size < 2:
        return adv - adv.mean() if adv.size else adv
    centered = adv - adv.mean()
    std = centered.std()
    if std == 0.0:
        return centered
    out = centered / std
    # a second pass removes the residual rounding error of the first
    out -= out.mean()
    return out / out.std()
