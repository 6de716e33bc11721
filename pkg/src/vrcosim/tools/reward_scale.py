"""Forecast how each reward component accumulates over an episode.

Scenarios (one target at a time, re-spawned every lifespan):

``worst_case``
    hammer stays at the initial position, no hits
``best_case``
    hammer sits on the target, one hit per lifespan
``linear_interp`` / ``quadratic_interp``
    within each lifespan the hammer moves from the initial position to the
    target along ``p = p0 + s (pT - p0)`` with ``s = k/N`` or ``s = (k/N)^2``
    and scores a hit on arrival

The effort proxy holds every joint motor at a constant activation; its
fatigue is integrated with the same 3CC-r stepper the arm simulator uses.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ..armsim.fatigue import FatigueState, fatigue_step
from ..armsim.model import N_DOF, FatigueParams
from ..whacapp.config import RewardWeights
from ..whacapp.reward import combine

SCENARIOS = ("worst_case", "best_case", "linear_interp", "quadratic_interp")
COLUMNS = ("S", "C_c", "C_d", "C_e")


@dataclass(frozen=True)
class ScalingScenario:
    kind: str = "worst_case"
    horizon: int = 1200
    dt: float = 0.05
    lifespan: float = 1.0
    initial_position: tuple[float, float, float] = (0.0, -0.5, -0.1)
    target_position: tuple[float, float, float] = (0.15, -0.1, -0.4)
    activation: float = 0.2

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.horizon < 1 or not self.dt > 0 or not self.lifespan > 0:
            raise ValueError("horizon, dt and lifespan must be positive")
        if not 0.0 <= self.activation <= 1.0:
            raise ValueError("activation must be in [0, 1]")

    @property
    def steps_per_target(self) -> int:
        return max(1, int(round(self.lifespan / self.dt)))


@dataclass
class ScaleReport:
    scenario: ScalingScenario
    weights: RewardWeights
    raw: dict[str, np.ndarray]  # unweighted per-step components
    weighted: dict[str, np.ndarray]  # weighted per-step contributions
    total: np.ndarray  # per-step total reward

    def cumulative(self) -> dict[str, np.ndarray]:
        out = {c: np.cumsum(self.weighted[c]) for c in COLUMNS}
        out["total"] = np.cumsum(self.total)
        return out

    def dominance(self) -> dict[str, float]:
        """|cumulative component| / |cumulative total| at the end of the horizon."""
        cum = self.cumulative()
        total = abs(float(cum["total"][-1]))
        return {c: (abs(float(cum[c][-1])) / total if total > 0 else float("inf") if cum[c][-1] else 0.0)
                for c in COLUMNS}

    def shares(self) -> dict[str, float]:
        """|cumulative component| as a fraction of the sum of all |components|."""
        cum = self.cumulative()
        mags = {c: abs(float(cum[c][-1])) for c in COLUMNS}
        s = sum(mags.values())
        return {c: (m / s if s > 0 else 0.0) for c, m in mags.items()}

    def to_csv(self) -> str:
        cum = self.cumulative()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "time"] + [f"{c}" for c in COLUMNS] + ["total"]
                   + [f"cum_{c}" for c in COLUMNS] + ["cum_total"])
        for k in range(len(self.total)):
            w.writerow([k, repr((k + 1) * self.scenario.dt)]
                       + [repr(float(self.weighted[c][k])) for c in COLUMNS] + [repr(float(self.total[k]))]
                       + [repr(float(cum[c][k])) for c in COLUMNS] + [repr(float(cum["total"][k]))])
        return buf.getvalue()

    def summary(self) -> dict:
        cum = self.cumulative()
        return {
            "scenario": self.scenario.kind,
            "horizon": self.scenario.horizon,
            "dt": self.scenario.dt,
            "weights": {"w_s": self.weights.w_s, "w_c": self.weights.w_c,
                        "w_d": self.weights.w_d, "w_e": self.weights.w_e},
            "cumulative": {c: float(cum[c][-1]) for c in (*COLUMNS, "total")},
            "dominance": self.dominance(),
            "shares": self.shares(),
        }


def hammer_path(scenario: ScalingScenario) -> tuple[np.ndarray, np.ndarray]:
    """Per-step hammer positions and hit flags."""
    n = scenario.steps_per_target
    p0 = np.asarray(scenario.initial_position, dtype=float)
    pt = np.asarray(scenario.target_position, dtype=float)
    pos = np.empty((scenario.horizon, 3))
    hits = np.zeros(scenario.horizon, dtype=bool)
    for k in range(scenario.horizon):
        phase = k % n + 1  # 1..n within the current lifespan
        last = phase == n
        if scenario.kind == "worst_case":
            pos[k] = p0
        elif scenario.kind == "best_case":
            pos[k] = pt
            hits[k] = last
        else:
            s = phase / n
            if scenario.kind == "quadratic_interp":
                s = s * s
            pos[k] = p0 + s * (pt - p0)
            hits[k] = last
    return pos, hits


def reward_scale_report(weights: RewardWeights | None = None, scenario: ScalingScenario | None = None,
                        fatigue: FatigueParams | None = None) -> ScaleReport:
    weights = weights or RewardWeights()
    scenario = scenario or ScalingScenario()
    pos, hits = hammer_path(scenario)
    target = np.asarray(scenario.target_position, dtype=float)
    T = scenario.horizon
    raw = {c: np.zeros(T) for c in COLUMNS}
    weighted = {c: np.zeros(T) for c in COLUMNS}
    total = np.zeros(T)
    fstate = FatigueState.rested(fatigue or FatigueParams())
    load = np.full(N_DOF, 100.0 * scenario.activation)
    for k in range(T):
        fstate = fatigue_step(fstate, load, scenario.dt)
        S = 1.0 if hits[k] else 0.0
        # the active target is the one being approached; on a hit it is removed
        C_d = 0.0 if hits[k] else -float(np.linalg.norm(pos[k] - target))
        C_c = 0.0
        C_e = -fstate.fatigued_fraction
        raw["S"][k], raw["C_c"][k], raw["C_d"][k], raw["C_e"][k] = S, C_c, C_d, C_e
        weighted["S"][k] = weights.w_s * S
        weighted["C_c"][k] = weights.w_c * 0.0 * C_c
        weighted["C_d"][k] = weights.w_d * C_d
        weighted["C_e"][k] = weights.w_e * C_e
        total[k] = combine(weights, S, C_c, C_d, C_e, 0.0)
    return ScaleReport(scenario, weights, raw, weighted, total)
