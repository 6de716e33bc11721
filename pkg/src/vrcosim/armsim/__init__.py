"""Simplified muscle-actuated arm: kinematics, dynamics, fatigue, perception."""
from .dynamics import ArmState, Dynamics, SimulationDiverged, rest_state, step_dynamics
from .fatigue import FatigueState, fatigue_step, target_load
from .kinematics import forward_kinematics
from .model import ArmModel, FatigueParams, load_model, save_model
from .perception import HeadsetConfig, ObservationError, observe, pool_image
from .user import UserSimulator, neural_effort

__all__ = [name for name in dir() if not name.startswith("_")]
