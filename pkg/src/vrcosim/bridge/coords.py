"""Rigid maps between simulator coordinate frames.

The canonical bridge frame is right-handed, y up, meters, with the user
looking along -z. ``flip_handedness`` mirrors the x axis before rotating,
which converts to and from left-handed engines (x right, y up, z forward).
"""
from __future__ import annotations

from dataclasses import dataclass

from ..geometry import IDENTITY_QUAT, quat_conj, quat_mul, quat_normalize, quat_rotate
from .messages import Pose


def _mirror_quat(q):
    # H R H with H = diag(-1, 1, 1) is again a proper rotation.
    w, x, y, z = q
    return (w, x, -y, -z)


@dataclass(frozen=True)
class CoordinateMap:
    rotation: tuple[float, float, float, float] = IDENTITY_QUAT
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    flip_handedness: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rotation", quat_normalize(self.rotation))
        object.__setattr__(self, "translation", tuple(float(c) for c in self.translation))

    def apply_point(self, p) -> tuple[float, float, float]:
        x, y, z = p
        if self.flip_handedness:
            x = -x
        rx, ry, rz = quat_rotate(self.rotation, (x, y, z))
        tx, ty, tz = self.translation
        return (rx + tx, ry + ty, rz + tz)

    def apply_vector(self, v) -> tuple[float, float, float]:
        x, y, z = v
        if self.flip_handedness:
            x = -x
        return quat_rotate(self.rotation, (x, y, z))

    def inverse(self) -> "CoordinateMap":
        # p = H R^T (p' - t) = (H R^T H) H p' - H R^T t
        r_inv = quat_conj(self.rotation)
        t = quat_rotate(r_inv, self.translation)
        if self.flip_handedness:
            r_inv = _mirror_quat(r_inv)
            t = (-t[0], t[1], t[2])
        return CoordinateMap(r_inv, (-t[0], -t[1], -t[2]), self.flip_handedness)


def map_pose(cmap: CoordinateMap, pose: Pose) -> Pose:
    position = cmap.apply_point(pose.position)
    q = pose.orientation
    if cmap.flip_handedness:
        q = _mirror_quat(q)
    return Pose(position, quat_normalize(quat_mul(cmap.rotation, q)))
