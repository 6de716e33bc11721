"""Whac-A-Mole application simulator served over the bridge."""
from .app import WhacApp
from .config import (
    CURRICULA,
    DIFFICULTIES,
    DIFFICULTY_MAX_TARGETS,
    N_CELLS,
    PLACEMENT_FRAMES,
    PLACEMENTS,
    GameConfig,
    PlacementFrame,
    RewardWeights,
    TargetArea,
    target_area,
)
from .game import (
    Counters,
    CurriculumState,
    Game,
    Outcome,
    Target,
    TargetStatus,
    curriculum_distribution,
    curriculum_sample,
)
from .render import Camera, Scene, SceneTarget, blend_color, render_rgbd
from .reward import RewardBreakdown, combine, compute_reward

__all__ = [
    "CURRICULA", "DIFFICULTIES", "DIFFICULTY_MAX_TARGETS", "N_CELLS", "PLACEMENT_FRAMES", "PLACEMENTS",
    "GameConfig", "PlacementFrame", "RewardWeights", "TargetArea", "target_area",
    "Counters", "CurriculumState", "Game", "Outcome", "Target", "TargetStatus",
    "curriculum_distribution", "curriculum_sample",
    "Camera", "Scene", "SceneTarget", "blend_color", "render_rgbd",
    "RewardBreakdown", "combine", "compute_reward",
    "WhacApp",
]
