"""Training and environment configuration."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from ..seeding import derive_seed
from ..whacapp.config import PLACEMENTS

RANDOM_PLACEMENT = "random"


@dataclass(frozen=True)
class PpoConfig:
    n_envs: int = 10
    steps_per_env: int = 4000
    batch_size: int = 1000
    total_steps: int = 2_000_000
    n_epochs: int = 10
    lr_initial: float = 5e-5
    lr_final: float = 1e-7
    lr_decay_start_fraction: float = 0.2
    clip_epsilon: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    kl_limit: float = 1.0
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    reward_scale: float = 1.0
    hidden: tuple[int, ...] = (64, 64)
    init_log_std: float = -1.0
    obs_clip: float = 10.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.n_envs < 1 or self.steps_per_env < 1:
            raise ValueError("n_envs and steps_per_env must be positive")
        if not 0 < self.batch_size <= self.n_envs * self.steps_per_env:
            raise ValueError("batch_size must be in (0, n_envs * steps_per_env]")
        if not self.lr_final <= self.lr_initial:
            raise ValueError("lr_final must not exceed lr_initial")
        if not self.kl_limit > 0:
            raise ValueError("kl_limit must be positive")
        if not 0.0 <= self.lr_decay_start_fraction <= 1.0:
            raise ValueError("lr_decay_start_fraction must be in [0, 1]")
        if self.total_steps < 1 or self.n_epochs < 1:
            raise ValueError("total_steps and n_epochs must be positive")

    @property
    def steps_per_update(self) -> int:
        return self.n_envs * self.steps_per_env

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, data: dict | None) -> "PpoConfig":
        data = dict(data or {})
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown ppo keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class EnvConfig:
    """How each training environment is built.

    ``observation`` selects ``"vector"`` (no image; target features from the
    app's debug log) or ``"image"`` (pooled RGB-D headset image).
    ``address`` switches from the in-process loopback to a bridge server.
    ``placement="random"`` draws low/mid/high per episode from the episode seed.
    """

    difficulty: str = "easy"
    placement: str = "mid"
    constrained: bool = False
    curriculum: str = "uniform"
    round_duration: float = 60.0
    dt: float = 0.05
    observation: str = "vector"
    stack_delay: float | None = None
    address: str | None = None
    game: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.observation not in ("vector", "image"):
            raise ValueError("observation must be 'vector' or 'image'")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.placement not in PLACEMENTS and self.placement != RANDOM_PLACEMENT:
            raise ValueError(f"placement must be one of {PLACEMENTS} or {RANDOM_PLACEMENT!r}")

    def placement_for(self, seed: int) -> str:
        if self.placement != RANDOM_PLACEMENT:
            return self.placement
        return PLACEMENTS[derive_seed(seed, "placement") % len(PLACEMENTS)]

    def episode_config(self, seed: int) -> dict[str, str]:
        return {
            "seed": str(seed),
            "difficulty": self.difficulty,
            "placement": self.placement_for(seed),
            "constrained": "1" if self.constrained else "0",
            "curriculum": self.curriculum,
            "round_duration": repr(float(self.round_duration)),
            "debug_obs": "1" if self.observation == "vector" else "0",
        }

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "EnvConfig":
        data = dict(data or {})
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown env keys: {sorted(unknown)}")
        return cls(**data)
