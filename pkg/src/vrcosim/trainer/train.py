"""Training loop: collect, estimate advantages, update, log, checkpoint."""
from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import numpy as np

from ..armsim.model import N_ACTUATORS, ArmModel
from ..seeding import derive_seed, make_rng, rng_state, set_rng_state
from .checkpoint import read_checkpoint, write_checkpoint
from .config import EnvConfig, PpoConfig
from .env import WhacEnv
from .policy import Layout, Policy
from .ppo import Adam, TrainingDiverged, lr_schedule, ppo_update
from .rollout import EnvFailure, RunningMeanStd, collect_rollouts

log = logging.getLogger(__name__)


class Trainer:
    """PPO over ``n_envs`` independent bridge sessions.

    Every collection phase starts by resetting all environments with seeds
    derived from ``(seed, env, update, episode)``, so a checkpoint only needs
    the learner state (policy, optimizer, normalizer, RNGs, counters).
    """

    def __init__(self, ppo: PpoConfig, env: EnvConfig, model: ArmModel | None = None, recorder=None):
        self.ppo = ppo
        self.env_cfg = env
        self.model = model or ArmModel()
        # only env 0 is recorded; its frames form one lockstep session dump
        self.envs = [WhacEnv(env, self.model, recorder=recorder if i == 0 else None) for i in range(ppo.n_envs)]
        obs_dim = len(self.envs[0].reset(0))
        self.layout = Layout(obs_dim, N_ACTUATORS, ppo.hidden)
        self.policy = Policy.initialize(self.layout, make_rng(ppo.seed, "init"), ppo.init_log_std)
        self.adam = Adam(self.layout.size)
        self.obs_rms = RunningMeanStd(obs_dim, ppo.obs_clip)
        self.action_rng = make_rng(ppo.seed, "actions")
        self.minibatch_rng = make_rng(ppo.seed, "minibatch")
        self.update = 0
        self.steps = 0

    def episode_seed(self, env_index: int, episode: int) -> int:
        return derive_seed(self.ppo.seed, "episode", env_index, self.update, episode) >> 1

    @property
    def done(self) -> bool:
        return self.steps >= self.ppo.total_steps

    def train_update(self, checkpoint_on_failure: str | Path | None = None) -> dict:
        cfg = self.ppo
        n_steps = min(cfg.steps_per_env, -(-(cfg.total_steps - self.steps) // cfg.n_envs))
        try:
            buf = collect_rollouts(self.policy, self.envs, self.obs_rms, n_steps, self.action_rng, self.episode_seed)
        except EnvFailure:
            if checkpoint_on_failure:
                self.save(checkpoint_on_failure)
            raise
        buf.compute_advantages(cfg.gamma, cfg.gae_lambda, cfg.reward_scale)
        lr = lr_schedule(min(self.steps, cfg.total_steps), cfg.total_steps, cfg)
        try:
            stats = ppo_update(self.policy, self.adam, buf.flat(), cfg, lr, self.minibatch_rng)
        except TrainingDiverged as exc:
            if checkpoint_on_failure:
                self.save(checkpoint_on_failure)
                exc.checkpoint_path = checkpoint_on_failure
            raise
        self.update += 1
        self.steps += buf.length * cfg.n_envs
        eps = buf.episodes
        record = {
            "update": self.update,
            "steps": self.steps,
            "mean_episode_reward": float(np.mean([e["reward"] for e in eps])) if eps else None,
            "mean_hits": float(np.mean([e["hits"] for e in eps])) if eps else None,
            "episodes": len(eps),
            "approx_kl": stats["approx_kl"],
            "lr": lr,
            "policy_loss": stats["policy_loss"],
            "value_loss": stats["value_loss"],
            "entropy": stats["entropy"],
            "clip_fraction": stats["clip_fraction"],
            "epochs": stats["epochs"],
            "mean_step_reward": float(buf.rewards[: buf.length].mean()),
            "reward_components": buf.component_means(),
        }
        return record

    def train(self, log_path: str | Path | None = None, checkpoint_path: str | Path | None = None,
              checkpoint_every: int = 1, max_updates: int | None = None, progress=None) -> list[dict]:
        records = []
        done_updates = 0
        while not self.done and (max_updates is None or done_updates < max_updates):
            t0 = time.perf_counter()
            record = self.train_update(checkpoint_on_failure=checkpoint_path)
            records.append(record)
            done_updates += 1
            if log_path is not None:
                Path(log_path).parent.mkdir(parents=True, exist_ok=True)
                with Path(log_path).open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
            if checkpoint_path is not None and (self.update % checkpoint_every == 0 or self.done):
                self.save(checkpoint_path)
            log.info("update %d steps %d hits %s kl %.4f (%.1fs)", record["update"], record["steps"],
                     record["mean_hits"], record["approx_kl"], time.perf_counter() - t0)
            if progress is not None:
                progress(record)
        return records

    # -- checkpoints -------------------------------------------------------
    def checkpoint_payload(self) -> tuple[dict, dict[str, np.ndarray]]:
        m, v, t = self.adam.state()
        header = {
            "ppo": self.ppo.to_dict(),
            "env": self.env_cfg.to_dict(),
            "model": self.model.to_dict(),
            "layout": {"obs_dim": self.layout.obs_dim, "act_dim": self.layout.act_dim,
                       "hidden": list(self.layout.hidden)},
            "update": self.update,
            "steps": self.steps,
            "adam_t": t,
            "rms_count": self.obs_rms.count,
            "rng": {"actions": rng_state(self.action_rng), "minibatch": rng_state(self.minibatch_rng)},
        }
        arrays = {"policy": self.policy.flat, "adam_m": m, "adam_v": v,
                  "rms_mean": self.obs_rms.mean, "rms_var": self.obs_rms.var}
        return header, arrays

    def save(self, path: str | Path) -> Path:
        return write_checkpoint(path, *self.checkpoint_payload())

    @classmethod
    def load(cls, path: str | Path, ppo_overrides: dict | None = None) -> "Trainer":
        header, arrays = read_checkpoint(path)
        ppo_dict = dict(header["ppo"])
        ppo_dict.update(ppo_overrides or {})
        trainer = cls(PpoConfig.from_dict(ppo_dict), EnvConfig.from_dict(header["env"]),
                      ArmModel.from_dict(header["model"]))
        trainer.restore(header, arrays)
        return trainer

    def restore(self, header: dict, arrays: dict[str, np.ndarray]) -> None:
        lay = header["layout"]
        layout = Layout(lay["obs_dim"], lay["act_dim"], tuple(lay["hidden"]))
        if layout != self.layout:
            raise ValueError(f"checkpoint layout {layout} does not match {self.layout}")
        self.policy = Policy(layout, arrays["policy"])
        self.adam.restore((arrays["adam_m"], arrays["adam_v"], header["adam_t"]))
        self.obs_rms.mean = arrays["rms_mean"].copy()
        self.obs_rms.var = arrays["rms_var"].copy()
        self.obs_rms.count = header["rms_count"]
        set_rng_state(self.action_rng, header["rng"]["actions"])
        set_rng_state(self.minibatch_rng, header["rng"]["minibatch"])
        self.update = header["update"]
        self.steps = header["steps"]

    def close(self) -> None:
        for env in self.envs:
            env.close()


def load_policy(path: str | Path) -> tuple[Policy, RunningMeanStd, dict]:
    """Policy, observation normalizer and header of a checkpoint (no envs built)."""
    header, arrays = read_checkpoint(path)
    lay = header["layout"]
    layout = Layout(lay["obs_dim"], lay["act_dim"], tuple(lay["hidden"]))
    rms = RunningMeanStd(layout.obs_dim, header["ppo"].get("obs_clip", 10.0))
    rms.mean = arrays["rms_mean"].copy()
    rms.var = arrays["rms_var"].copy()
    rms.count = header["rms_count"]
    return Policy(layout, arrays["policy"]), rms, header
