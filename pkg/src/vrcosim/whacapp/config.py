"""Game configuration, target-area placements and episode-config parsing."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..geometry import quat_from_axis_angle, quat_mul, quat_rotate

DIFFICULTY_MAX_TARGETS = {"easy": 1, "medium": 3, "hard": 5}
DIFFICULTIES = tuple(DIFFICULTY_MAX_TARGETS)
PLACEMENTS = ("low", "mid", "high")
CURRICULA = ("uniform", "adaptive")
GRID_SIZE = 3
N_CELLS = GRID_SIZE * GRID_SIZE


@dataclass(frozen=True)
class RewardWeights:
    w_s: float = 10.0
    w_c: float = 2.5
    w_d: float = 1.0
    w_e: float = 0.1


@dataclass(frozen=True)
class PlacementFrame:
    """Target-area pose relative to the HMD.

    ``offset`` is (right, up, front) in meters; ``tilt`` (degrees) rotates the
    area about the lateral axis, positive tilting its normal upwards.
    """

    name: str
    offset: tuple[float, float, float]
    tilt: float
    # required hit direction in the HMD frame for the velocity constraint
    hit_axis: tuple[float, float, float]

    def hmd_offset(self) -> tuple[float, float, float]:
        right, up, front = self.offset
        return (right, up, -front)

    def tilt_quat(self):
        return quat_from_axis_angle((1.0, 0.0, 0.0), -math.radians(self.tilt))


DOWN = (0.0, -1.0, 0.0)
FORWARD = (0.0, 0.0, -1.0)

PLACEMENT_FRAMES = {
    "low": PlacementFrame("low", (0.15, -0.30, 0.35), 45.0, DOWN),
    "mid": PlacementFrame("mid", (0.15, -0.10, 0.40), 0.0, FORWARD),
    "high": PlacementFrame("high", (0.15, 0.20, 0.30), -45.0, FORWARD),
}


@dataclass(frozen=True)
class GameConfig:
    difficulty: str = "medium"
    placement: str = "mid"
    constrained: bool = False
    round_duration: float = 60.0
    grid_spacing: float = 0.125
    target_radius: float = 0.025
    target_lifespan: float = 1.0
    spawn_interval_max: float = 0.5
    velocity_threshold: float = 0.8
    hammer_radius: float = 0.03
    seed: int = 0
    curriculum: str = "uniform"
    debug_obs: bool = False
    weights: RewardWeights = field(default_factory=RewardWeights)

    def __post_init__(self):
        if self.difficulty not in DIFFICULTY_MAX_TARGETS:
            raise ValueError(f"unknown difficulty {self.difficulty!r}")
        if self.placement not in PLACEMENT_FRAMES:
            raise ValueError(f"unknown placement {self.placement!r}")
        if self.curriculum not in CURRICULA:
            raise ValueError(f"unknown curriculum {self.curriculum!r}")
        for name in ("round_duration", "grid_spacing", "target_radius", "target_lifespan",
                     "spawn_interval_max", "hammer_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def max_targets(self) -> int:
        return DIFFICULTY_MAX_TARGETS[self.difficulty]

    @property
    def placement_frame(self) -> PlacementFrame:
        return PLACEMENT_FRAMES[self.placement]

    def with_episode_config(self, cfg: dict[str, str]) -> "GameConfig":
        """Apply RESET key/value overrides (values arrive as strings)."""
        changes = {}
        for key, raw in cfg.items():
            if key not in EPISODE_KEYS:
                raise ValueError(f"unknown episode config key {key!r}")
            changes[key] = EPISODE_KEYS[key](raw)
        return replace(self, **changes)

    def episode_config(self) -> dict[str, str]:
        return {
            "seed": str(self.seed),
            "difficulty": self.difficulty,
            "placement": self.placement,
            "constrained": "1" if self.constrained else "0",
            "curriculum": self.curriculum,
            "round_duration": repr(float(self.round_duration)),
            "debug_obs": "1" if self.debug_obs else "0",
        }

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "weights"}
        d["weights"] = {f.name: getattr(self.weights, f.name) for f in fields(RewardWeights)}
        return d

    @classmethod
    def from_dict(cls, data: dict | None) -> "GameConfig":
        data = dict(data or {})
        if "weights" in data:
            data["weights"] = RewardWeights(**data["weights"])
        return cls(**data)


def _parse_bool(raw: str) -> bool:
    value = str(raw).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


EPISODE_KEYS = {
    "seed": lambda s: int(s),
    "difficulty": str,
    "placement": str,
    "constrained": _parse_bool,
    "curriculum": str,
    "round_duration": float,
    "debug_obs": _parse_bool,
}


@dataclass(frozen=True)
class TargetArea:
    """Target-area geometry in the app frame for a given HMD pose."""

    center: np.ndarray
    right: np.ndarray
    up: np.ndarray
    normal: np.ndarray
    hit_axis: np.ndarray
    cells: np.ndarray  # (9, 3) positions, index = row * 3 + col, row 0 at the top

    def depth_of(self, point) -> float:
        """Signed distance of ``point`` along the area normal (towards the user)."""
        return float(np.dot(np.asarray(point) - self.center, self.normal))


def target_area(cfg: GameConfig, hmd_position, hmd_orientation) -> TargetArea:
    frame = cfg.placement_frame
    q_area = quat_mul(hmd_orientation, frame.tilt_quat())
    center = np.asarray(hmd_position, dtype=float) + np.asarray(quat_rotate(hmd_orientation, frame.hmd_offset()))
    right = np.asarray(quat_rotate(q_area, (1.0, 0.0, 0.0)))
    up = np.asarray(quat_rotate(q_area, (0.0, 1.0, 0.0)))
    normal = np.asarray(quat_rotate(q_area, (0.0, 0.0, 1.0)))
    hit_axis = np.asarray(quat_rotate(hmd_orientation, frame.hit_axis))
    cells = np.empty((N_CELLS, 3))
    s = cfg.grid_spacing
    for row in range(GRID_SIZE):
        for col in range(GRID_SIZE):
            cells[row * GRID_SIZE + col] = center + (col - 1) * s * right + (1 - row) * s * up
    return TargetArea(center, right, up, normal, hit_axis, cells)
