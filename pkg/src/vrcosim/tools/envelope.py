"""Reach envelope of the fully extended arm and target reachability checks.

The envelope is sampled on a regular grid over the two shoulder DOFs
(elevation, azimuth) with the elbow straight. Reachability of a target is
judged from the shoulder: its distance must not exceed the shell radius and
its direction must fall inside the sampled solid angle, both inflated by a
tolerance. Direction membership uses a nearest-neighbour query on the
sampled unit directions, accepting gaps up to half a grid-cell diagonal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..armsim.kinematics import forward_kinematics
from ..armsim.model import ArmModel
from ..bridge.coords import CoordinateMap, map_pose

REACHABLE = "reachable"
UNREACHABLE = "unreachable"
BOUNDARY = "boundary"


@dataclass
class EnvelopeCloud:
    points: np.ndarray  # (N, 3) in the app frame
    shoulder: np.ndarray
    radius: float
    resolution: int
    variant: str  # "bare" or "controller"
    elevation_range: tuple[float, float]
    azimuth_range: tuple[float, float]
    extension: str = "elbow at 0 rad (fully extended)"
    _tree: cKDTree | None = field(default=None, repr=False)
    _edge_tree: cKDTree | None = field(default=None, repr=False)

    @property
    def cell_half_diagonal(self) -> float:
        """Largest angular gap (rad) from an interior direction to a sample."""
        n = self.resolution - 1
        de = (self.elevation_range[1] - self.elevation_range[0]) / n
        da = (self.azimuth_range[1] - self.azimuth_range[0]) / n
        return 0.5 * math.hypot(de, da)

    def directions(self) -> np.ndarray:
        rel = self.points - self.shoulder
        return rel / np.linalg.norm(rel, axis=1, keepdims=True)

    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.directions())
        return self._tree

    def edge_tree(self) -> cKDTree:
        """Directions on the perimeter of the sampled (elevation, azimuth) grid."""
        if self._edge_tree is None:
            n = self.resolution
            grid = self.directions().reshape(n, n, 3)
            edge = np.concatenate((grid[0], grid[-1], grid[:, 0], grid[:, -1]))
            self._edge_tree = cKDTree(edge)
        return self._edge_tree

    def metadata(self) -> dict:
        return {
            "resolution": self.resolution,
            "variant": self.variant,
            "radius": self.radius,
            "shoulder": self.shoulder.tolist(),
            "elevation_range": list(self.elevation_range),
            "azimuth_range": list(self.azimuth_range),
            "extension": self.extension,
            "n_points": len(self.points),
        }


def reach_envelope(model: ArmModel | None = None, resolution: int = 100, cmap: CoordinateMap | None = None,
                   variant: str = "controller", elevation_range=None, azimuth_range=None) -> EnvelopeCloud:
    """Sample the full-extension shell; ``variant`` is ``"bare"`` (wrist) or ``"controller"`` (hammer tip)."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2 samples per DOF")
    if variant not in ("bare", "controller"):
        raise ValueError("variant must be 'bare' or 'controller'")
    model = model or ArmModel()
    cmap = cmap or CoordinateMap()
    e_lo, e_hi = elevation_range or (model.joint_lower[0], model.joint_upper[0])
    a_lo, a_hi = azimuth_range or (model.joint_lower[1], model.joint_upper[1])
    elev = np.linspace(e_lo, e_hi, resolution)
    azim = np.linspace(a_lo, a_hi, resolution)
    pts = np.empty((resolution * resolution, 3))
    k = 0
    for e in elev:
        for a in azim:
            wrist, tip = forward_kinematics(model, (e, a, 0.0))
            pose = wrist if variant == "bare" else tip
            pts[k] = cmap.apply_point(pose.position)
            k += 1
    shoulder = np.asarray(cmap.apply_point(model.shoulder), dtype=float)
    radius = model.upper_arm_length + model.forearm_length
    if variant == "controller":
        radius = float(np.max(np.linalg.norm(pts - shoulder, axis=1)))
    return EnvelopeCloud(pts, shoulder, float(radius), resolution, variant, (float(e_lo), float(e_hi)),
                         (float(a_lo), float(a_hi)))


@dataclass(frozen=True)
class TargetCheck:
    target: tuple[float, float, float]
    status: str
    distance: float
    angular_gap: float

    @property
    def reachable(self) -> bool:
        return self.status != UNREACHABLE


def check_targets(cloud: EnvelopeCloud, targets, tolerance: float = 0.005) -> list[TargetCheck]:
    """Classify each target as reachable, unreachable or boundary.

    ``boundary`` marks reachable targets within ``tolerance`` (meters) of the
    shell radius, or whose direction lies within half a grid cell plus
    ``tolerance`` of the perimeter of the sampled solid angle.
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, 3)
    if len(targets) == 0:
        return []
    if len(cloud.points) == 0:
        raise ValueError("empty envelope cloud")
    rel = targets - cloud.shoulder
    dist = np.linalg.norm(rel, axis=1)
    limit = cloud.cell_half_diagonal
    out = []
    for t, r, d in zip(targets, rel, dist):
        if d < 1e-12:
            out.append(TargetCheck(tuple(t), REACHABLE, 0.0, 0.0))
            continue
        gap = _angle(cloud.tree(), r / d)
        ang_tol = tolerance / d
        radial_ok = d <= cloud.radius + tolerance
        angular_ok = gap <= limit + ang_tol
        near_edge = abs(d - cloud.radius) <= tolerance or _angle(cloud.edge_tree(), r / d) <= limit + ang_tol
        if radial_ok and angular_ok:
            status = BOUNDARY if near_edge else REACHABLE
        else:
            status = UNREACHABLE
        out.append(TargetCheck(tuple(float(v) for v in t), status, float(d), float(gap)))
    return out


def _angle(tree: cKDTree, direction: np.ndarray) -> float:
    chord, _ = tree.query(direction)
    return 2.0 * math.asin(min(1.0, chord / 2.0))


def whac_targets(model: ArmModel | None = None, cmap: CoordinateMap | None = None) -> dict[str, np.ndarray]:
    """The 3x3 grid positions of every placement, in the app frame, for the model's head pose."""
    from ..whacapp.config import PLACEMENTS, GameConfig, target_area

    model = model or ArmModel()
    hmd = map_pose(cmap or CoordinateMap(), model.hmd_pose)
    return {p: target_area(GameConfig(placement=p), hmd.position, hmd.orientation).cells for p in PLACEMENTS}
