"""Forward kinematics of the 3-DOF arm.

Joint order is (shoulder elevation, shoulder azimuth, elbow flexion). With
all joints at zero the arm hangs straight down (-y). Elevation rotates the
upper arm about the lateral x axis towards the front (-z); azimuth then
rotates it about the vertical y axis; elbow flexion bends the forearm in
the same plane, so the forearm pitch is ``elevation + elbow``.
"""
from __future__ import annotations

import math

import numpy as np

from ..bridge.messages import Pose
from ..geometry import quat_mul, quat_rotate, rot_x, rot_y
from .model import ArmModel


def segment_direction(pitch: float, azimuth: float) -> tuple[float, float, float]:
    """Unit vector of a segment hanging along -y, pitched then yawed."""
    sp = math.sin(pitch)
    return (-sp * math.sin(azimuth), -math.cos(pitch), -sp * math.cos(azimuth))


def forward_kinematics(model: ArmModel, q) -> tuple[Pose, Pose]:
    """Return ``(wrist pose, hammer-tip pose)`` in the model frame."""
    elev, azim, elbow = (float(v) for v in q)
    sx, sy, sz = model.shoulder
    l1, l2 = model.upper_arm_length, model.forearm_length
    ux, uy, uz = segment_direction(elev, azim)
    fx, fy, fz = segment_direction(elev + elbow, azim)
    wrist = (sx + l1 * ux + l2 * fx, sy + l1 * uy + l2 * fy, sz + l1 * uz + l2 * fz)
    wrist_rot = quat_mul(rot_y(azim), rot_x(elev + elbow))
    off = quat_rotate(wrist_rot, model.hammer_offset.position)
    tip = (wrist[0] + off[0], wrist[1] + off[1], wrist[2] + off[2])
    tip_rot = quat_mul(wrist_rot, model.hammer_offset.orientation)
    return Pose(wrist, wrist_rot), Pose(tip, tip_rot)


def hammer_tip_position(model: ArmModel, q) -> np.ndarray:
    return np.array(forward_kinematics(model, q)[1].position)


def elbow_position(model: ArmModel, q) -> np.ndarray:
    elev, azim, _ = (float(v) for v in q)
    u = segment_direction(elev, azim)
    return np.asarray(model.shoulder) + model.upper_arm_length * np.asarray(u)
