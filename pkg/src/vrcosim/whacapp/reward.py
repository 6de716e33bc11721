"""Step reward as a weighted sum of score, contact, distance and effort terms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RewardWeights


@dataclass(frozen=True)
class RewardBreakdown:
    S: float
    C_c: float
    C_d: float
    C_e: float
    v_h: float
    total: float

    def components(self) -> dict[str, float]:
        return {"S": self.S, "C_c": self.C_c, "C_d": self.C_d, "C_e": self.C_e, "v_h": self.v_h}


def combine(weights: RewardWeights, S: float, C_c: float, C_d: float, C_e: float, v_h: float) -> float:
    """``w_s*S + w_c*v_h*C_c + w_d*C_d + w_e*C_e``, summed left to right."""
    return weights.w_s * S + weights.w_c * v_h * C_c + weights.w_d * C_d + weights.w_e * C_e


def compute_reward(
    weights: RewardWeights,
    score_delta: int,
    n_slow_contacts: int,
    tip,
    active_positions,
    fatigue_level: float,
    v_h: float,
) -> RewardBreakdown:
    """Assemble the breakdown for one step.

    ``fatigue_level`` is the mean fatigued fraction (0..1) reported by the
    user side; ``tip`` may be None when no controller pose was sent, in which
    case the distance term is zero.
    """
    S = float(score_delta)
    C_c = -float(n_slow_contacts)
    C_d = 0.0
    if tip is not None:
        tip = np.asarray(tip, dtype=float)
        for pos in active_positions:
            C_d -= float(np.linalg.norm(tip - np.asarray(pos, dtype=float)))
    C_e = -float(fatigue_level)
    v_h = float(v_h)
    return RewardBreakdown(S, C_c, C_d, C_e, v_h, combine(weights, S, C_c, C_d, C_e, v_h))
