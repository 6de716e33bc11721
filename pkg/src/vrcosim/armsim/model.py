"""Arm model parameters and their config-file schema.

Config files are YAML mappings with two optional sections::

    arm:
      upper_arm_length: 0.31        # m
      forearm_length: 0.27          # m, elbow to controller grip
      upper_arm_mass: 2.0           # kg, at segment midpoint
      forearm_mass: 1.5             # kg, at segment midpoint
      controller_mass: 0.2          # kg, at the hammer tip
      joint_lower: [-0.6, -1.0, 0.0]  # rad: shoulder elevation, shoulder azimuth, elbow flexion
      joint_upper: [3.0, 1.3, 2.6]
      max_torque: [40.0, 25.0, 25.0]  # N m per DOF (agonist and antagonist alike)
      damping: 1.0                  # N m s / rad
      armature: 0.05                # kg m^2 rotor inertia added per DOF
      activation_time_constant: 0.03  # s
      gravity: 9.81                 # m/s^2
      shoulder: [0.18, -0.25, 0.05]   # m, in the model frame
      hammer_offset: {position: [0, -0.12, 0], orientation: [1, 0, 0, 0]}
      hmd_pose: {position: [0, 0, 0], orientation: [1, 0, 0, 0]}
    fatigue:
      F: 0.0146
      R: 0.0022
      r: 7.5
      LD: 10.0
      LR: 10.0

Any omitted key takes the default above.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from ..bridge.messages import Pose

N_DOF = 3
N_ACTUATORS = 2 * N_DOF
DOF_NAMES = ("shoulder_elevation", "shoulder_azimuth", "elbow_flexion")


@dataclass(frozen=True)
class FatigueParams:
    F: float = 0.0146
    R: float = 0.0022
    r: float = 7.5
    LD: float = 10.0
    LR: float = 10.0


@dataclass(frozen=True)
class ArmModel:
    upper_arm_length: float = 0.31
    forearm_length: float = 0.27
    upper_arm_mass: float = 2.0
    forearm_mass: float = 1.5
    controller_mass: float = 0.2
    joint_lower: tuple[float, float, float] = (-0.6, -1.0, 0.0)
    joint_upper: tuple[float, float, float] = (3.0, 1.3, 2.6)
    max_torque: tuple[float, float, float] = (40.0, 25.0, 25.0)
    damping: float = 1.0
    armature: float = 0.05
    activation_time_constant: float = 0.03
    gravity: float = 9.81
    shoulder: tuple[float, float, float] = (0.18, -0.25, 0.05)
    hammer_offset: Pose = field(default_factory=lambda: Pose((0.0, -0.12, 0.0)))
    hmd_pose: Pose = field(default_factory=Pose)
    fatigue: FatigueParams = field(default_factory=FatigueParams)

    def __post_init__(self):
        for name in ("joint_lower", "joint_upper", "max_torque", "shoulder"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.upper_arm_length <= 0 or self.forearm_length <= 0:
            raise ValueError("segment lengths must be positive")
        if self.activation_time_constant <= 0:
            raise ValueError("activation time constant must be positive")
        if any(lo >= hi for lo, hi in zip(self.joint_lower, self.joint_upper)):
            raise ValueError("joint lower limits must be below upper limits")

    @property
    def hammer_length(self) -> float:
        return math.sqrt(sum(c * c for c in self.hammer_offset.position))

    @property
    def max_reach(self) -> float:
        return self.upper_arm_length + self.forearm_length + self.hammer_length

    def with_limits(self, lower, upper) -> "ArmModel":
        return replace(self, joint_lower=tuple(lower), joint_upper=tuple(upper))

    # -- (de)serialisation ---------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        fat = d.pop("fatigue")
        for key in ("hammer_offset", "hmd_pose"):
            pose = getattr(self, key)
            d[key] = {"position": list(pose.position), "orientation": list(pose.orientation)}
        for key in ("joint_lower", "joint_upper", "max_torque", "shoulder"):
            d[key] = list(d[key])
        return {"arm": d, "fatigue": fat}

    @classmethod
    def from_dict(cls, data: dict | None) -> "ArmModel":
        data = data or {}
        arm = dict(data.get("arm") or {})
        known = {f.name for f in fields(cls)} - {"fatigue"}
        unknown = set(arm) - known
        if unknown:
            raise ValueError(f"unknown arm config keys: {sorted(unknown)}")
        for key in ("hammer_offset", "hmd_pose"):
            if key in arm:
                arm[key] = Pose(**arm[key])
        fat = data.get("fatigue") or {}
        unknown = set(fat) - {f.name for f in fields(FatigueParams)}
        if unknown:
            raise ValueError(f"unknown fatigue config keys: {sorted(unknown)}")
        return cls(**arm, fatigue=FatigueParams(**fat))


def load_model(path: str | Path | None) -> ArmModel:
    if path is None:
        return ArmModel()
    with open(path) as fh:
        return ArmModel.from_dict(yaml.safe_load(fh))


def save_model(model: ArmModel, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(model.to_dict(), fh, sort_keys=False)
