"""Policy evaluation over the fixed difficulty/placement grid."""
from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..armsim.model import N_ACTUATORS, ArmModel
from ..seeding import derive_seed, make_rng
from ..whacapp.config import N_CELLS
from .config import EnvConfig
from .env import WhacEnv
from .policy import Policy
from .rollout import RunningMeanStd

# (sweep, difficulty, placement): difficulties at mid, then placements at medium
EVAL_GRID = (
    ("difficulty", "easy", "mid"),
    ("difficulty", "medium", "mid"),
    ("difficulty", "hard", "mid"),
    ("placement", "medium", "low"),
    ("placement", "medium", "mid"),
    ("placement", "medium", "high"),
)


def run_round(env: WhacEnv, seed: int, policy: Policy | None, obs_rms: RunningMeanStd | None,
              rng: np.random.Generator | None = None) -> dict:
    """Play one full round with mean actions (or uniform random ones when ``policy`` is None)."""
    obs = env.reset(seed)
    hit_speeds: list[float] = []
    depths: list[float] = []
    total_reward = 0.0
    effort = 0.0
    max_fatigue = 0.0
    steps = 0
    log: dict[str, float] = {}
    while True:
        if policy is None:
            action = rng.random(N_ACTUATORS)
        else:
            action = policy.act(obs_rms.normalize(obs))[0][0]
        obs, reward, done, log = env.step(np.clip(action, 0.0, 1.0))
        total_reward += reward
        steps += 1
        effort += float(np.mean(np.square(np.clip(action, 0.0, 1.0))))
        max_fatigue = max(max_fatigue, env.user.fatigue.fatigued_fraction)
        if log.get("step_hits", 0.0) > 0:
            hit_speeds.extend([log["v_h"]] * int(log["step_hits"]))
        if "hammer_depth" in log:
            depths.append(log["hammer_depth"])
        if done:
            break
    hits = int(log.get("hits", 0))
    misses = int(log.get("misses", 0))
    return {
        "seed": seed,
        "steps": steps,
        "hits": hits,
        "misses": misses,
        "slow_contacts": int(log.get("slow_contacts", 0)),
        "hit_rate": hits / (hits + misses) if hits + misses else 0.0,
        "per_cell": [{"spawns": int(log.get(f"cell/{k}/spawns", 0)), "hits": int(log.get(f"cell/{k}/hits", 0))}
                     for k in range(N_CELLS)],
        "hit_speeds": hit_speeds,
        "hammer_depths": depths,
        "final_fatigue": env.user.fatigue.fatigued_fraction,
        "max_fatigue": max_fatigue,
        "mean_effort": effort / max(steps, 1),
        "total_reward": total_reward,
    }


def evaluate_policy(policy: Policy | None, obs_rms: RunningMeanStd | None, env_cfg: EnvConfig,
                    n_rounds: int = 1, seed: int = 0, grid=EVAL_GRID, model: ArmModel | None = None,
                    log_path: str | Path | None = None, user_label: str = "policy") -> list[dict]:
    """Run ``n_rounds`` per grid configuration and return one record per round."""
    records = []
    for ci, (sweep, difficulty, placement) in enumerate(grid):
        cfg = replace(env_cfg, difficulty=difficulty, placement=placement)
        env = WhacEnv(cfg, model)
        rng = make_rng(seed, "random-policy", ci)
        try:
            for r in range(n_rounds):
                round_seed = derive_seed(seed, "eval", ci, r) >> 1
                rec = {"user": user_label, "config_index": ci, "sweep": sweep, "difficulty": difficulty,
                       "placement": placement, "constrained": cfg.constrained, "round": r}
                rec.update(run_round(env, round_seed, policy, obs_rms, rng))
                records.append(rec)
        finally:
            env.close()
    if log_path is not None:
        path = Path(log_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return records
