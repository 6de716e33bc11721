"""PPO trainer driving the simulated user through the bridge."""
from .checkpoint import CheckpointError, decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint
from .config import EnvConfig, PpoConfig
from .env import WhacEnv
from .evaluate import EVAL_GRID, evaluate_policy, run_round
from .gae import compute_gae, normalize_advantages
from .policy import Layout, Policy
from .ppo import Adam, TrainingDiverged, lr_schedule, ppo_update
from .rollout import EnvFailure, RolloutBuffer, RunningMeanStd, collect_rollouts
from .train import Trainer, load_policy

__all__ = [name for name in dir() if not name.startswith("_")]
