"""Software RGB-D renderer for the headset camera.

Flat-shaded, drawn in painter's order with a depth test: the grey target-area
quad, then the targets as discs lying in the area plane, then the hammer head
as a ray-cast sphere. Depth is the Euclidean distance from the camera centre
along each pixel ray (meters), ``+inf`` where nothing is hit.

Target colour is ``lerp(green, red, age/lifespan)`` with each channel rounded
as ``floor(255*f + 0.5)``, so the blend midpoint gives R = G = 128.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from ..bridge.messages import RgbdImage
from ..geometry import quat_to_matrix

PLANE_COLOR = (128, 128, 128)
HAMMER_COLOR = (0, 0, 255)
NEAR = 1e-3


@dataclass(frozen=True)
class Camera:
    width: int = 120
    height: int = 80
    vertical_fov: float = 90.0  # degrees

    @property
    def focal(self) -> float:
        return 0.5 * self.height / math.tan(math.radians(self.vertical_fov) / 2.0)

    @property
    def principal_point(self) -> tuple[float, float]:
        return 0.5 * self.width, 0.5 * self.height

    def project(self, point_cam) -> tuple[float, float]:
        """Pixel coordinates (u right, v down) of a camera-frame point (looking down -z)."""
        x, y, z = point_cam
        cx, cy = self.principal_point
        return cx + self.focal * x / -z, cy - self.focal * y / -z


@lru_cache(maxsize=8)
def _camera_rays(camera: Camera) -> np.ndarray:
    """Unit ray directions in the camera frame through pixel centres, shape (H, W, 3)."""
    cx, cy = camera.principal_point
    u = np.arange(camera.width) + 0.5
    v = np.arange(camera.height) + 0.5
    uu, vv = np.meshgrid(u, v)
    d = np.stack([(uu - cx) / camera.focal, -(vv - cy) / camera.focal, -np.ones_like(uu)], axis=-1)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    d.setflags(write=False)
    return d


@dataclass(frozen=True)
class SceneTarget:
    position: tuple[float, float, float]
    age_fraction: float


@dataclass(frozen=True)
class Scene:
    """Everything the renderer needs, in the app frame."""

    plane_center: tuple[float, float, float]
    plane_right: tuple[float, float, float]
    plane_up: tuple[float, float, float]
    plane_half_extent: float
    targets: tuple[SceneTarget, ...] = ()
    target_radius: float = 0.025
    hammer_position: tuple[float, float, float] | None = None
    hammer_radius: float = 0.03


def blend_color(age_fraction: float) -> tuple[int, int, int]:
    f = min(max(float(age_fraction), 0.0), 1.0)
    return int(math.floor(255.0 * f + 0.5)), int(math.floor(255.0 * (1.0 - f) + 0.5)), 0


def render_rgbd(scene: Scene, hmd_position, hmd_orientation, camera: Camera | None = None) -> RgbdImage:
    camera = camera or Camera()
    h, w = camera.height, camera.width
    if h == 0 or w == 0:
        return RgbdImage.empty()
    rot = np.asarray(quat_to_matrix(hmd_orientation), dtype=float)
    rays = np.ascontiguousarray(_camera_rays(camera) @ rot.T)
    n_t = len(scene.targets)
    targets = np.zeros((n_t, 3))
    colors = np.zeros((n_t, 3), dtype=np.uint8)
    for i, tgt in enumerate(scene.targets):
        targets[i] = tgt.position
        colors[i] = blend_color(tgt.age_fraction)
    has_hammer = scene.hammer_position is not None
    hammer = np.asarray(scene.hammer_position if has_hammer else (0.0, 0.0, 0.0), dtype=float)
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    depth = np.full((h, w), np.inf)
    _raster(
        rays, np.asarray(hmd_position, dtype=float),
        np.asarray(scene.plane_center, dtype=float), np.asarray(scene.plane_right, dtype=float),
        np.asarray(scene.plane_up, dtype=float), float(scene.plane_half_extent),
        targets, colors, float(scene.target_radius),
        has_hammer, hammer, float(scene.hammer_radius),
        np.array(PLANE_COLOR, dtype=np.uint8), np.array(HAMMER_COLOR, dtype=np.uint8),
        rgb, depth,
    )
    return RgbdImage(w, h, rgb, depth.astype(np.float32))


@njit(cache=True)
def _raster(rays, origin, center, right, up, half, targets, colors, t_radius,
            has_hammer, hammer, h_radius, plane_color, hammer_color, rgb, depth):
    normal = np.cross(right, up)
    oc_plane = center - origin
    plane_num = oc_plane[0] * normal[0] + oc_plane[1] * normal[1] + oc_plane[2] * normal[2]
    # target offsets in plane coordinates
    n_t = targets.shape[0]
    tx = np.empty(n_t)
    ty = np.empty(n_t)
    for k in range(n_t):
        d = targets[k] - center
        tx[k] = d[0] * right[0] + d[1] * right[1] + d[2] * right[2]
        ty[k] = d[0] * up[0] + d[1] * up[1] + d[2] * up[2]
    oh = origin - hammer
    c_h = oh[0] * oh[0] + oh[1] * oh[1] + oh[2] * oh[2] - h_radius * h_radius
    r2 = t_radius * t_radius
    for j in range(rays.shape[0]):
        for i in range(rays.shape[1]):
            dx = rays[j, i, 0]
            dy = rays[j, i, 1]
            dz = rays[j, i, 2]
            denom = dx * normal[0] + dy * normal[1] + dz * normal[2]
            if abs(denom) > 1e-12:
                t = plane_num / denom
                if t > NEAR:
                    px = origin[0] + t * dx - center[0]
                    py = origin[1] + t * dy - center[1]
                    pz = origin[2] + t * dz - center[2]
                    lx = px * right[0] + py * right[1] + pz * right[2]
                    ly = px * up[0] + py * up[1] + pz * up[2]
                    if abs(lx) <= half and abs(ly) <= half and t <= depth[j, i]:
                        depth[j, i] = t
                        rgb[j, i, :] = plane_color
                    for k in range(n_t):
                        ex = lx - tx[k]
                        ey = ly - ty[k]
                        if ex * ex + ey * ey <= r2 and t <= depth[j, i]:
                            depth[j, i] = t
                            rgb[j, i, :] = colors[k]
            if has_hammer:
                b = dx * oh[0] + dy * oh[1] + dz * oh[2]
                disc = b * b - c_h
                if disc >= 0.0:
                    root = np.sqrt(disc)
                    t = -b - root
                    if t <= NEAR:
                        # camera inside the sphere: use the exit point
                        t = -b + root
                    if t > NEAR and t <= depth[j, i]:
                        depth[j, i] = t
                        rgb[j, i, :] = hammer_color
